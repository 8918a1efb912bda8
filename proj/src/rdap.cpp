#include "linnaeus/rdap.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus::ingest {

using nlohmann::json;

HttpGet make_http_get(std::chrono::seconds timeout) {
  return [timeout](const std::string& url) -> HttpResponse {
    // Split "scheme://host[:port]/path" for httplib.
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw BackendError("bad url: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(static_cast<time_t>(timeout.count()), 0);
    client.set_read_timeout(static_cast<time_t>(timeout.count()), 0);
    auto res = client.Get(path, {{"Accept", "application/rdap+json, application/json"}});
    if (!res) throw BackendError("GET " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  };
}

RdapCache::RdapCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

std::filesystem::path RdapCache::body_path(Asn asn) const { return dir_ / ("AS" + std::to_string(asn) + ".json"); }
std::filesystem::path RdapCache::absent_path(Asn asn) const { return dir_ / ("AS" + std::to_string(asn) + ".absent"); }

std::optional<std::optional<std::string>> RdapCache::get(Asn asn) const {
  std::lock_guard lock(mu_);
  if (std::filesystem::exists(absent_path(asn))) return std::optional<std::string>{};
  auto p = body_path(asn);
  if (!std::filesystem::exists(p)) return std::nullopt;
  return std::optional<std::string>{util::read_file(p)};
}

void RdapCache::put(Asn asn, const std::optional<std::string>& body) {
  std::lock_guard lock(mu_);
  if (body)
    util::write_file_atomic(body_path(asn), *body);
  else
    util::write_file_atomic(absent_path(asn), "");
}

RdapBootstrap RdapBootstrap::parse(const json& doc) {
  RdapBootstrap out;
  auto services = doc.find("services");
  if (services == doc.end() || !services->is_array()) throw ParseError("rdap bootstrap: missing 'services'");
  for (const auto& svc : *services) {
    if (!svc.is_array() || svc.size() < 2 || !svc[0].is_array() || !svc[1].is_array() || svc[1].empty())
      throw ParseError("rdap bootstrap: malformed service entry");
    std::string base = svc[1][0].get<std::string>();
    for (const auto& url : svc[1])
      if (url.is_string() && url.get<std::string>().rfind("https://", 0) == 0) {
        base = url.get<std::string>();
        break;
      }
    while (!base.empty() && base.back() == '/') base.pop_back();
    for (const auto& r : svc[0]) {
      auto text = r.get<std::string>();
      auto dash = text.find('-');
      auto first = parse_asn(text.substr(0, dash));
      auto last = dash == std::string::npos ? first : parse_asn(text.substr(dash + 1));
      if (!first || !last || *last < *first) throw ParseError("rdap bootstrap: bad range '" + text + "'");
      out.ranges_.push_back({*first, *last, base});
    }
  }
  std::sort(out.ranges_.begin(), out.ranges_.end(), [](const Range& a, const Range& b) { return a.first < b.first; });
  return out;
}

std::optional<std::string> RdapBootstrap::endpoint_for(Asn asn) const {
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), asn, [](Asn a, const Range& r) { return a < r.first; });
  if (it == ranges_.begin()) return std::nullopt;
  --it;
  if (asn > it->last) return std::nullopt;
  return it->base;
}

namespace {

struct Vcard {
  std::optional<std::string> fn;
  std::vector<std::string> emails;
};

Vcard read_vcard(const json& entity) {
  Vcard out;
  auto arr = entity.find("vcardArray");
  if (arr == entity.end() || !arr->is_array() || arr->size() < 2 || !(*arr)[1].is_array()) return out;
  for (const auto& prop : (*arr)[1]) {
    if (!prop.is_array() || prop.size() < 4 || !prop[0].is_string() || !prop[3].is_string()) continue;
    auto key = prop[0].get<std::string>();
    auto value = util::trim(prop[3].get<std::string>());
    if (value.empty()) continue;
    if (key == "fn" && !out.fn) out.fn = value;
    if (key == "email") out.emails.push_back(value);
  }
  return out;
}

bool has_role(const json& entity, std::string_view role) {
  auto roles = entity.find("roles");
  if (roles == entity.end() || !roles->is_array()) return false;
  return std::any_of(roles->begin(), roles->end(), [&](const json& r) { return r.is_string() && r.get<std::string>() == role; });
}

void collect_emails(const json& entities, std::set<std::string>& out) {
  if (!entities.is_array()) return;
  for (const auto& e : entities) {
    if (!e.is_object()) continue;
    for (auto& m : read_vcard(e).emails) out.insert(m);
    if (auto nested = e.find("entities"); nested != e.end()) collect_emails(*nested, out);
  }
}

}  // namespace

RdapRecord parse_rdap(Asn asn, std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ParseError("rdap AS" + std::to_string(asn) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("rdap AS" + std::to_string(asn) + ": response is not an object");
  if (auto cls = doc.find("objectClassName"); cls != doc.end() && (!cls->is_string() || *cls != "autnum"))
    throw ParseError("rdap AS" + std::to_string(asn) + ": not an autnum object");

  RdapRecord r;
  r.asn = asn;
  if (auto it = doc.find("name"); it != doc.end() && it->is_string() && !util::trim(it->get<std::string>()).empty())
    r.name = util::trim(it->get<std::string>());
  if (auto it = doc.find("country"); it != doc.end() && it->is_string()) r.country = normalize_country(it->get<std::string>());

  auto entities = doc.find("entities");
  if (entities != doc.end() && entities->is_array()) {
    for (const auto& e : *entities) {
      if (!e.is_object() || !has_role(e, "registrant")) continue;
      auto card = read_vcard(e);
      if (card.fn) {
        r.org_name = card.fn;
      } else if (auto h = e.find("handle"); h != e.end() && h->is_string()) {
        r.org_name = h->get<std::string>();
      }
      break;
    }
    std::set<std::string> emails;
    collect_emails(*entities, emails);
    r.contact_emails.assign(emails.begin(), emails.end());
  }
  return r;
}

RdapClient::RdapClient(HttpGet http, RdapCache* cache, RdapOptions options)
    : http_(std::move(http)), cache_(cache), options_(std::move(options)) {
  if (options_.attempts < 1) options_.attempts = 1;
}

std::string RdapClient::url_for(Asn asn) const {
  std::string base = options_.endpoint;
  if (options_.bootstrap)
    if (auto b = options_.bootstrap->endpoint_for(asn)) base = *b;
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + "/autnum/" + std::to_string(asn);
}

std::optional<RdapRecord> RdapClient::fetch(Asn asn) {
  if (cache_) {
    if (auto hit = cache_->get(asn)) {
      ++stats_.cache_hits;
      if (!*hit) return std::nullopt;
      return parse_rdap(asn, **hit);
    }
  }
  const auto url = url_for(asn);
  for (int attempt = 0; attempt < options_.attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
    HttpResponse res;
    try {
      ++stats_.network_calls;
      res = http_(url);
    } catch (const BackendError&) {
      continue;
    }
    if (res.status == 404) {
      if (cache_) cache_->put(asn, std::nullopt);
      return std::nullopt;
    }
    if (res.status == 200) {
      auto record = parse_rdap(asn, res.body);
      if (cache_) cache_->put(asn, res.body);
      return record;
    }
    // 429 and 5xx are worth retrying; other statuses will not change.
    if (res.status != 429 && res.status < 500) break;
  }
  ++stats_.failures;
  return std::nullopt;
}

RdapLookup RdapClient::lookup() {
  return [this](const std::vector<Asn>& asns) {
    std::vector<std::optional<RdapRecord>> found(asns.size());
    util::parallel_for(asns.size(), options_.jobs, [&](std::size_t i) {
      try {
        found[i] = fetch(asns[i]);
      } catch (const ParseError&) {
        ++stats_.parse_errors;
      }
    });
    std::map<Asn, RdapRecord> out;
    for (auto& r : found)
      if (r) out.emplace(r->asn, std::move(*r));
    return out;
  };
}

std::optional<RdapRecord> fetch_rdap(Asn asn, const std::string& endpoint, RdapCache& cache, const HttpGet& http) {
  RdapOptions opts;
  opts.endpoint = endpoint;
  RdapClient client(http, &cache, opts);
  return client.fetch(asn);
}

}  // namespace linnaeus::ingest
