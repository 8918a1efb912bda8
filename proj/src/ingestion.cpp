#include "linnaeus/ingestion.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus::ingest {

using nlohmann::json;

std::optional<std::string> normalize_country(std::string_view raw) {
  auto s = util::trim(raw);
  if (s.size() != 2) return std::nullopt;
  for (auto& c : s) {
    if (!std::isalpha(static_cast<unsigned char>(c))) return std::nullopt;
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return s;
}

std::optional<Asn> parse_asn(std::string_view raw) {
  auto s = util::trim(raw);
  if (s.size() > 2 && (s[0] == 'A' || s[0] == 'a') && (s[1] == 'S' || s[1] == 's')) s = s.substr(2);
  if (s.empty() || s.size() > 10) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  if (v == 0 || v > 0xffffffffULL) return std::nullopt;
  return static_cast<Asn>(v);
}

std::string to_string(Source s) {
  switch (s) {
    case Source::ipinfo: return "ipinfo";
    case Source::peeringdb: return "peeringdb";
    case Source::rdap: return "rdap";
    case Source::asrank: return "asrank";
    case Source::absent: return "absent";
  }
  return "absent";
}

Source source_from_string(std::string_view s) {
  if (s == "ipinfo") return Source::ipinfo;
  if (s == "peeringdb") return Source::peeringdb;
  if (s == "rdap") return Source::rdap;
  if (s == "asrank") return Source::asrank;
  if (s == "absent") return Source::absent;
  throw DataError("unknown provenance '" + std::string(s) + "'");
}

namespace {

struct InvalidRecord : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::string> opt_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  auto s = util::trim(it->get<std::string>());
  if (s.empty()) return std::nullopt;
  return s;
}

std::optional<std::uint64_t> opt_count(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number_integer()) {
    auto v = it->get<std::int64_t>();
    if (v < 0) throw InvalidRecord(std::string("negative count in '") + key + "'");
    return static_cast<std::uint64_t>(v);
  }
  if (it->is_number_float()) {
    auto v = it->get<double>();
    if (v < 0) throw InvalidRecord(std::string("negative count in '") + key + "'");
    return static_cast<std::uint64_t>(v);
  }
  if (it->is_string()) {
    const auto s = util::trim(it->get<std::string>());
    if (s.empty()) return std::nullopt;
    std::uint64_t v = 0;
    for (char c : s) {
      if (!std::isdigit(static_cast<unsigned char>(c))) throw InvalidRecord(std::string("bad count in '") + key + "'");
      v = v * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return v;
  }
  throw InvalidRecord(std::string("bad count in '") + key + "'");
}

std::optional<Asn> json_asn(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (it->is_number_integer()) {
    auto v = it->get<std::int64_t>();
    if (v <= 0 || v > 0xffffffffLL) return std::nullopt;
    return static_cast<Asn>(v);
  }
  if (it->is_string()) return parse_asn(it->get<std::string>());
  return std::nullopt;
}

std::optional<std::string> country_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (it->is_string()) return normalize_country(it->get<std::string>());
  if (it->is_object()) {
    if (auto iso = opt_string(*it, "iso")) return normalize_country(*iso);
  }
  return std::nullopt;
}

const json& sub_object(const json& obj, const char* key) {
  static const json empty = json::object();
  auto it = obj.find(key);
  return it != obj.end() && it->is_object() ? *it : empty;
}

/// Keeps the last occurrence per ASN and emits records sorted by ASN.
template <class Record>
void finish(Parsed<Record>& parsed, std::map<Asn, Record>& by_asn, const char* source) {
  parsed.records.clear();
  parsed.records.reserve(by_asn.size());
  for (auto& [_, r] : by_asn) parsed.records.push_back(std::move(r));
  parsed.report.records = parsed.records.size();
  if (parsed.records.empty()) throw DataError(std::string(source) + ": no parseable records");
}

template <class Record>
void insert_last_wins(std::map<Asn, Record>& by_asn, Record rec, ParseReport& report, const char* source) {
  auto asn = rec.asn;
  auto [it, inserted] = by_asn.insert_or_assign(asn, std::move(rec));
  (void)it;
  if (!inserted) {
    ++report.duplicates;
    report.warnings.push_back(std::string(source) + ": duplicate AS" + std::to_string(asn) + ", keeping last row");
  }
}

void check_stream(std::istream& in, const char* source) {
  if (!in.good() && !in.eof()) throw DataError(std::string(source) + ": input stream unreadable");
}

}  // namespace

Parsed<AsRankRecord> parse_asrank(std::istream& in) {
  check_stream(in, "asrank");
  Parsed<AsRankRecord> parsed;
  std::map<Asn, AsRankRecord> by_asn;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    try {
      auto obj = json::parse(line);
      if (!obj.is_object()) throw InvalidRecord("not an object");
      auto asn = json_asn(obj, "asn");
      if (!asn) throw InvalidRecord("missing or invalid asn");
      AsRankRecord r;
      r.asn = *asn;
      r.as_name = opt_string(obj, "asnName");
      const auto& org = sub_object(obj, "organization");
      r.org_name = opt_string(org, "orgName");
      r.org_country = country_field(org, "country");
      r.country = country_field(obj, "country");
      if (auto it = obj.find("cone"); it != obj.end() && it->is_object()) {
        r.cone_asns = opt_count(*it, "numberAsns");
        r.cone_prefixes = opt_count(*it, "numberPrefixes");
        r.cone_addresses = opt_count(*it, "numberAddresses");
      }
      const auto& deg = sub_object(obj, "asnDegree");
      r.degree_total = opt_count(deg, "total");
      r.degree_provider = opt_count(deg, "provider");
      r.degree_customer = opt_count(deg, "customer");
      r.degree_peer = opt_count(deg, "peer");
      if (r.degree_total) {
        for (auto part : {r.degree_provider, r.degree_customer, r.degree_peer})
          if (part && *part > *r.degree_total) throw InvalidRecord("degree total below component degree");
      }
      const auto& ann = sub_object(obj, "announcing");
      r.originated_prefixes = opt_count(ann, "numberPrefixes");
      r.originated_addresses = opt_count(ann, "numberAddresses");
      if (auto it = obj.find("coneCountries"); it != obj.end() && it->is_array()) {
        std::set<std::string> cc;
        for (const auto& c : *it) {
          std::optional<std::string> code;
          if (c.is_string()) code = normalize_country(c.get<std::string>());
          else if (c.is_object()) code = country_field(c, "country").has_value() ? country_field(c, "country") : normalize_country(c.value("iso", ""));
          if (code) cc.insert(*code);
        }
        r.cone_countries.assign(cc.begin(), cc.end());
      }
      insert_last_wins(by_asn, std::move(r), parsed.report, "asrank");
    } catch (const json::exception& e) {
      ++parsed.report.skipped;
      parsed.report.warnings.push_back("asrank line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InvalidRecord& e) {
      ++parsed.report.skipped;
      parsed.report.warnings.push_back("asrank line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw DataError("asrank: read error");
  finish(parsed, by_asn, "asrank");
  return parsed;
}

Parsed<PeeringDbRecord> parse_peeringdb(std::istream& in) {
  check_stream(in, "peeringdb");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("peeringdb: ") + e.what());
  }
  return parse_peeringdb(doc);
}

namespace {

const json* table_rows(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end()) return nullptr;
  if (it->is_object()) {
    auto data = it->find("data");
    if (data != it->end() && data->is_array()) return &*data;
    return nullptr;
  }
  if (it->is_array()) return &*it;
  return nullptr;
}

}  // namespace

Parsed<PeeringDbRecord> parse_peeringdb(const json& doc) {
  if (!doc.is_object()) throw DataError("peeringdb: snapshot is not an object");
  const json* nets = table_rows(doc, "net");
  if (!nets) throw DataError("peeringdb: missing network table 'net'");

  Parsed<PeeringDbRecord> parsed;

  std::map<std::uint64_t, std::pair<std::optional<std::string>, std::optional<std::string>>> orgs;
  if (const json* rows = table_rows(doc, "org")) {
    for (const auto& o : *rows) {
      if (!o.is_object()) continue;
      auto id = o.find("id");
      if (id == o.end() || !id->is_number_integer()) continue;
      orgs[id->get<std::uint64_t>()] = {opt_string(o, "name"), country_field(o, "country")};
    }
  }

  std::map<std::uint64_t, Facility> facs;
  if (const json* rows = table_rows(doc, "fac")) {
    for (const auto& f : *rows) {
      if (!f.is_object()) continue;
      auto id = f.find("id");
      if (id == f.end() || !id->is_number_integer()) continue;
      Facility fac;
      fac.id = id->get<std::uint64_t>();
      fac.city = opt_string(f, "city");
      fac.country = country_field(f, "country");
      facs[fac.id] = fac;
    }
  }

  std::map<std::uint64_t, std::vector<Facility>> net_facs;
  if (const json* rows = table_rows(doc, "netfac")) {
    for (const auto& nf : *rows) {
      if (!nf.is_object()) continue;
      auto net_id = nf.find("net_id");
      auto fac_id = nf.find("fac_id");
      if (net_id == nf.end() || fac_id == nf.end() || !net_id->is_number_integer() || !fac_id->is_number_integer())
        continue;
      Facility fac;
      fac.id = fac_id->get<std::uint64_t>();
      if (auto it = facs.find(fac.id); it != facs.end()) fac = it->second;
      if (!fac.city) fac.city = opt_string(nf, "city");
      if (!fac.country) fac.country = country_field(nf, "country");
      net_facs[net_id->get<std::uint64_t>()].push_back(std::move(fac));
    }
  }

  std::map<std::uint64_t, std::vector<IxpPort>> net_ports;
  if (const json* rows = table_rows(doc, "netixlan")) {
    for (const auto& p : *rows) {
      if (!p.is_object()) continue;
      auto net_id = p.find("net_id");
      if (net_id == p.end() || !net_id->is_number_integer()) continue;
      try {
        IxpPort port;
        if (auto ix = p.find("ix_id"); ix != p.end() && ix->is_number_integer()) port.ixp_id = ix->get<std::uint64_t>();
        port.port_capacity_mbps = opt_count(p, "speed").value_or(0);
        net_ports[net_id->get<std::uint64_t>()].push_back(port);
      } catch (const InvalidRecord& e) {
        ++parsed.report.skipped;
        parsed.report.warnings.push_back(std::string("peeringdb netixlan: ") + e.what());
      }
    }
  }

  std::map<Asn, PeeringDbRecord> by_asn;
  for (const auto& n : *nets) {
    if (!n.is_object()) {
      ++parsed.report.skipped;
      continue;
    }
    auto asn = json_asn(n, "asn");
    if (!asn) {
      ++parsed.report.skipped;
      parsed.report.warnings.push_back("peeringdb net: missing or invalid asn");
      continue;
    }
    PeeringDbRecord r;
    r.asn = *asn;
    r.as_name = opt_string(n, "name");
    r.website = opt_string(n, "website");
    r.network_type = opt_string(n, "info_type");
    r.traffic_tier = opt_string(n, "info_traffic");
    r.traffic_asymmetry = opt_string(n, "info_ratio");
    r.geo_scope = opt_string(n, "info_scope");
    if (auto org = n.find("org_id"); org != n.end() && org->is_number_integer()) {
      if (auto it = orgs.find(org->get<std::uint64_t>()); it != orgs.end()) {
        r.org_name = it->second.first;
        r.org_country = it->second.second;
      }
    }
    if (auto id = n.find("id"); id != n.end() && id->is_number_integer()) {
      auto net_id = id->get<std::uint64_t>();
      if (auto it = net_facs.find(net_id); it != net_facs.end()) r.facilities = it->second;
      if (auto it = net_ports.find(net_id); it != net_ports.end()) r.ixp_ports = it->second;
    }
    insert_last_wins(by_asn, std::move(r), parsed.report, "peeringdb");
  }
  finish(parsed, by_asn, "peeringdb");
  return parsed;
}

namespace {

/// Reads a CSV header and returns column positions for the requested names (-1 when missing).
std::vector<int> csv_columns(std::istream& in, const std::vector<std::vector<std::string>>& wanted, const char* source) {
  std::string line;
  while (std::getline(in, line)) {
    if (!util::trim(line).empty()) break;
  }
  if (util::trim(line).empty()) throw DataError(std::string(source) + ": empty input");
  std::vector<std::string> header;
  if (!util::split_csv_line(line, header)) throw DataError(std::string(source) + ": malformed header");
  for (auto& h : header) h = util::to_lower(util::trim(h));
  if (!header.empty() && header[0].rfind("\xef\xbb\xbf", 0) == 0) header[0] = header[0].substr(3);
  std::vector<int> pos;
  for (const auto& aliases : wanted) {
    int found = -1;
    for (std::size_t i = 0; i < header.size() && found < 0; ++i)
      for (const auto& a : aliases)
        if (header[i] == a) found = static_cast<int>(i);
    pos.push_back(found);
  }
  return pos;
}

std::optional<std::string> csv_opt(const std::vector<std::string>& fields, int pos) {
  if (pos < 0 || static_cast<std::size_t>(pos) >= fields.size()) return std::nullopt;
  auto s = util::trim(fields[pos]);
  if (s.empty()) return std::nullopt;
  return s;
}

}  // namespace

Parsed<IpinfoRecord> parse_ipinfo(std::istream& in) {
  check_stream(in, "ipinfo");
  Parsed<IpinfoRecord> parsed;
  auto cols = csv_columns(in, {{"asn"}, {"name", "as_name"}, {"domain", "website"}, {"country", "cc"}}, "ipinfo");
  if (cols[0] < 0) throw DataError("ipinfo: header lacks 'asn' column");
  std::map<Asn, IpinfoRecord> by_asn;
  std::string line;
  std::vector<std::string> fields;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    if (!util::split_csv_line(line, fields)) {
      ++parsed.report.skipped;
      parsed.report.warnings.push_back("ipinfo line " + std::to_string(line_no) + ": unterminated quote");
      continue;
    }
    auto asn_field = csv_opt(fields, cols[0]);
    auto asn = asn_field ? parse_asn(*asn_field) : std::nullopt;
    if (!asn) {
      ++parsed.report.skipped;
      parsed.report.warnings.push_back("ipinfo line " + std::to_string(line_no) + ": invalid asn");
      continue;
    }
    IpinfoRecord r;
    r.asn = *asn;
    r.as_name = csv_opt(fields, cols[1]);
    r.website = csv_opt(fields, cols[2]);
    if (auto c = csv_opt(fields, cols[3])) r.country = normalize_country(*c);
    insert_last_wins(by_asn, std::move(r), parsed.report, "ipinfo");
  }
  if (in.bad()) throw DataError("ipinfo: read error");
  finish(parsed, by_asn, "ipinfo");
  return parsed;
}

Parsed<EyeballRecord> parse_eyeball(std::istream& in) {
  check_stream(in, "eyeball");
  Parsed<EyeballRecord> parsed;
  auto cols = csv_columns(in, {{"asn", "as"}, {"users", "estimated_users"}, {"cc", "country"}}, "eyeball");
  if (cols[0] < 0 || cols[1] < 0) throw DataError("eyeball: header needs 'asn' and 'users' columns");
  std::map<Asn, EyeballRecord> by_asn;
  std::string line;
  std::vector<std::string> fields;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    auto skip = [&](const std::string& why) {
      ++parsed.report.skipped;
      parsed.report.warnings.push_back("eyeball line " + std::to_string(line_no) + ": " + why);
    };
    if (!util::split_csv_line(line, fields)) {
      skip("unterminated quote");
      continue;
    }
    auto asn_field = csv_opt(fields, cols[0]);
    auto asn = asn_field ? parse_asn(*asn_field) : std::nullopt;
    auto users = csv_opt(fields, cols[1]);
    if (!asn || !users) {
      skip("missing asn or users");
      continue;
    }
    EyeballRecord r;
    r.asn = *asn;
    try {
      std::size_t used = 0;
      double v = std::stod(*users, &used);
      if (used != users->size() || v < 0) throw std::invalid_argument("users");
      r.estimated_users = static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      skip("invalid users value");
      continue;
    }
    if (auto c = csv_opt(fields, cols[2])) r.sample_country = normalize_country(*c);
    insert_last_wins(by_asn, std::move(r), parsed.report, "eyeball");
  }
  if (in.bad()) throw DataError("eyeball: read error");
  finish(parsed, by_asn, "eyeball");
  return parsed;
}

// ---------------------------------------------------------------------------
// Merge

namespace {

template <class Record>
std::map<Asn, const Record*> index_by_asn(const std::vector<Record>& rows) {
  std::map<Asn, const Record*> out;
  for (const auto& r : rows) out[r.asn] = &r;
  return out;
}

void pick(Sourced& field, const std::optional<std::string>& candidate, Source source) {
  if (field.source == Source::absent && candidate) {
    field.value = candidate;
    field.source = source;
  }
}

}  // namespace

MergeResult merge_records(const std::vector<AsRankRecord>& asrank, const std::vector<PeeringDbRecord>& peeringdb,
                          const std::vector<IpinfoRecord>& ipinfo, const std::vector<EyeballRecord>& eyeball,
                          const RdapLookup& rdap) {
  MergeResult result;
  const auto rank_idx = index_by_asn(asrank);
  const auto pdb_idx = index_by_asn(peeringdb);
  const auto ipi_idx = index_by_asn(ipinfo);
  const auto eye_idx = index_by_asn(eyeball);

  std::set<Asn> outside;
  auto count_outside = [&](const auto& idx) {
    for (const auto& [asn, _] : idx)
      if (!rank_idx.contains(asn)) outside.insert(asn);
  };
  count_outside(pdb_idx);
  count_outside(ipi_idx);
  count_outside(eye_idx);
  result.report.dropped = outside.size();

  auto find = [](const auto& idx, Asn asn) -> decltype(idx.begin()->second) {
    auto it = idx.find(asn);
    return it == idx.end() ? nullptr : it->second;
  };

  // Semantic fields from IPinfo then PeeringDB; RDAP is only consulted where org metadata is still missing.
  result.records.reserve(rank_idx.size());
  std::vector<Asn> need_rdap;
  for (const auto& [asn, rank] : rank_idx) {
    MergedAsRecord m;
    m.asn = asn;
    const auto* ipi = find(ipi_idx, asn);
    const auto* pdb = find(pdb_idx, asn);
    if (ipi) {
      pick(m.as_name, ipi->as_name, Source::ipinfo);
      pick(m.website, ipi->website, Source::ipinfo);
      pick(m.as_country, ipi->country, Source::ipinfo);
    }
    if (pdb) {
      pick(m.as_name, pdb->as_name, Source::peeringdb);
      pick(m.org_name, pdb->org_name, Source::peeringdb);
      pick(m.website, pdb->website, Source::peeringdb);
      pick(m.org_country, pdb->org_country, Source::peeringdb);
    }
    if (m.org_name.source == Source::absent) need_rdap.push_back(asn);

    m.cone_asns = rank->cone_asns;
    m.cone_addrs = rank->cone_addresses;
    m.cone_prefixes = rank->cone_prefixes;
    m.deg_total = rank->degree_total;
    m.deg_provider = rank->degree_provider;
    m.deg_customer = rank->degree_customer;
    m.deg_peer = rank->degree_peer;
    m.orig_addrs = rank->originated_addresses;
    m.orig_prefixes = rank->originated_prefixes;
    m.cone_countries = rank->cone_countries;

    if (pdb) {
      m.facilities = pdb->facilities;
      std::uint64_t total = 0;
      for (const auto& p : pdb->ixp_ports) total += p.port_capacity_mbps;
      m.ixp_port_mbps_total = total;
      m.traffic_tier = pdb->traffic_tier;
      m.traffic_asym = pdb->traffic_asymmetry;
      m.geo_scope = pdb->geo_scope;
    }
    if (const auto* eye = find(eye_idx, asn)) m.users = eye->estimated_users;
    result.records.push_back(std::move(m));
  }

  std::map<Asn, RdapRecord> rdap_records;
  if (rdap && !need_rdap.empty()) {
    result.report.rdap_requested = need_rdap.size();
    rdap_records = rdap(need_rdap);
  }

  for (auto& m : result.records) {
    if (auto it = rdap_records.find(m.asn); it != rdap_records.end()) {
      ++result.report.rdap_resolved;
      const auto& r = it->second;
      pick(m.as_name, r.name, Source::rdap);
      pick(m.org_name, r.org_name, Source::rdap);
      pick(m.as_country, r.country, Source::rdap);
      pick(m.org_country, r.country, Source::rdap);
    }
    const auto* rank = rank_idx.at(m.asn);
    pick(m.as_name, rank->as_name, Source::asrank);
    pick(m.org_name, rank->org_name, Source::asrank);
    pick(m.as_country, rank->country, Source::asrank);
    pick(m.org_country, rank->org_country, Source::asrank);
  }
  result.report.merged = result.records.size();
  return result;
}

// ---------------------------------------------------------------------------
// Merged dataset I/O

namespace {

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_from(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

nlohmann::ordered_json to_json(const MergedAsRecord& r) {
  nlohmann::ordered_json j;
  j["asn"] = r.asn;
  j["as_name"] = opt_json(r.as_name.value);
  j["org_name"] = opt_json(r.org_name.value);
  j["as_country"] = opt_json(r.as_country.value);
  j["org_country"] = opt_json(r.org_country.value);
  j["website"] = opt_json(r.website.value);
  j["users"] = opt_json(r.users);
  j["cone_asns"] = opt_json(r.cone_asns);
  j["cone_addrs"] = opt_json(r.cone_addrs);
  j["cone_prefixes"] = opt_json(r.cone_prefixes);
  j["deg_total"] = opt_json(r.deg_total);
  j["deg_provider"] = opt_json(r.deg_provider);
  j["deg_customer"] = opt_json(r.deg_customer);
  j["deg_peer"] = opt_json(r.deg_peer);
  j["orig_addrs"] = opt_json(r.orig_addrs);
  j["orig_prefixes"] = opt_json(r.orig_prefixes);
  j["cone_countries"] = r.cone_countries;
  if (r.facilities) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : *r.facilities) {
      nlohmann::ordered_json fj;
      fj["id"] = f.id;
      fj["city"] = opt_json(f.city);
      fj["country"] = opt_json(f.country);
      arr.push_back(std::move(fj));
    }
    j["facilities"] = std::move(arr);
  } else {
    j["facilities"] = nullptr;
  }
  j["ixp_port_mbps_total"] = opt_json(r.ixp_port_mbps_total);
  j["traffic_tier"] = opt_json(r.traffic_tier);
  j["traffic_asym"] = opt_json(r.traffic_asym);
  j["geo_scope"] = opt_json(r.geo_scope);
  nlohmann::ordered_json prov;
  prov["as_name"] = to_string(r.as_name.source);
  prov["org_name"] = to_string(r.org_name.source);
  prov["as_country"] = to_string(r.as_country.source);
  prov["org_country"] = to_string(r.org_country.source);
  prov["website"] = to_string(r.website.source);
  j["provenance"] = std::move(prov);
  return j;
}

MergedAsRecord merged_from_json(const json& j) {
  try {
    MergedAsRecord r;
    r.asn = j.at("asn").get<Asn>();
    const json empty = json::object();
    const auto& prov = j.contains("provenance") ? j.at("provenance") : empty;
    auto sourced = [&](const char* key) {
      Sourced s;
      s.value = opt_from<std::string>(j, key);
      if (auto p = prov.find(key); p != prov.end() && p->is_string()) s.source = source_from_string(p->get<std::string>());
      if (!s.value) s.source = Source::absent;
      return s;
    };
    r.as_name = sourced("as_name");
    r.org_name = sourced("org_name");
    r.as_country = sourced("as_country");
    r.org_country = sourced("org_country");
    r.website = sourced("website");
    r.users = opt_from<std::uint64_t>(j, "users");
    r.cone_asns = opt_from<std::uint64_t>(j, "cone_asns");
    r.cone_addrs = opt_from<std::uint64_t>(j, "cone_addrs");
    r.cone_prefixes = opt_from<std::uint64_t>(j, "cone_prefixes");
    r.deg_total = opt_from<std::uint64_t>(j, "deg_total");
    r.deg_provider = opt_from<std::uint64_t>(j, "deg_provider");
    r.deg_customer = opt_from<std::uint64_t>(j, "deg_customer");
    r.deg_peer = opt_from<std::uint64_t>(j, "deg_peer");
    r.orig_addrs = opt_from<std::uint64_t>(j, "orig_addrs");
    r.orig_prefixes = opt_from<std::uint64_t>(j, "orig_prefixes");
    if (auto it = j.find("cone_countries"); it != j.end() && it->is_array())
      r.cone_countries = it->get<std::vector<std::string>>();
    if (auto it = j.find("facilities"); it != j.end() && it->is_array()) {
      std::vector<Facility> facs;
      for (const auto& f : *it) {
        Facility fac;
        fac.id = f.at("id").get<std::uint64_t>();
        fac.city = opt_from<std::string>(f, "city");
        fac.country = opt_from<std::string>(f, "country");
        facs.push_back(std::move(fac));
      }
      r.facilities = std::move(facs);
    }
    r.ixp_port_mbps_total = opt_from<std::uint64_t>(j, "ixp_port_mbps_total");
    r.traffic_tier = opt_from<std::string>(j, "traffic_tier");
    r.traffic_asym = opt_from<std::string>(j, "traffic_asym");
    r.geo_scope = opt_from<std::string>(j, "geo_scope");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("merged record: ") + e.what());
  }
}

namespace {

void check_header(const std::string& line) {
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception&) {
    throw DataError("merged dataset: missing schema header line");
  }
  if (!header.is_object() || header.value("schema", "") != "linnaeus-merged")
    throw DataError("merged dataset: missing schema header line");
  if (header.value("version", 0) != kMergedSchemaVersion)
    throw DataError("merged dataset: unsupported schema version");
}

}  // namespace

void write_merged(std::ostream& out, const std::vector<MergedAsRecord>& records) {
  nlohmann::ordered_json header;
  header["schema"] = "linnaeus-merged";
  header["version"] = kMergedSchemaVersion;
  out << header.dump() << '\n';
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

MergedReader::MergedReader(std::istream& in) : in_(in) {
  std::string line;
  while (std::getline(in_, line))
    if (!util::trim(line).empty()) break;
  if (util::trim(line).empty()) throw DataError("merged dataset: empty input");
  check_header(line);
}

std::optional<MergedAsRecord> MergedReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    if (util::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("merged dataset record " + std::to_string(index_) + ": " + e.what());
    }
    ++index_;
    return merged_from_json(j);
  }
  return std::nullopt;
}

std::vector<MergedAsRecord> read_merged(std::istream& in) {
  MergedReader reader(in);
  std::vector<MergedAsRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

// ---------------------------------------------------------------------------
// Coverage

CoverageReport compute_coverage(const std::vector<AsRankRecord>& asrank, const std::vector<PeeringDbRecord>& peeringdb,
                                const std::vector<IpinfoRecord>& ipinfo, const std::vector<EyeballRecord>& eyeball) {
  auto count_if = [](const auto& rows, auto pred) {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), pred));
  };
  CoverageReport rep;
  rep.peeringdb = {
      {"Total network records", peeringdb.size()},
      {"Website", count_if(peeringdb, [](const auto& r) { return r.website.has_value(); })},
      {"Network-type", count_if(peeringdb, [](const auto& r) { return r.network_type.has_value(); })},
      {"Geo-scope", count_if(peeringdb, [](const auto& r) { return r.geo_scope.has_value(); })},
      {"Peering-ratio", count_if(peeringdb, [](const auto& r) { return r.traffic_asymmetry.has_value(); })},
      {"Facility (netfac)", count_if(peeringdb, [](const auto& r) { return !r.facilities.empty(); })},
      {"IXP LAN (netixlan)", count_if(peeringdb, [](const auto& r) { return !r.ixp_ports.empty(); })},
  };
  rep.other = {
      {"IPinfo total ASNs", ipinfo.size()},
      {"Website field present", count_if(ipinfo, [](const auto& r) { return r.website.has_value(); })},
      {"CAIDA AS-Rank ASNs", asrank.size()},
      {"Cones inferred", count_if(asrank, [](const auto& r) { return r.cone_asns.has_value(); })},
      {"AS-Pop total records", eyeball.size()},
  };
  return rep;
}

nlohmann::ordered_json to_json(const CoverageReport& report) {
  nlohmann::ordered_json j;
  auto rows = [](const std::vector<CoverageRow>& v) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : v) arr.push_back({{"metric", r.metric}, {"records", r.count}});
    return arr;
  };
  j["peeringdb"] = rows(report.peeringdb);
  j["other"] = rows(report.other);
  return j;
}

std::string render_text(const CoverageReport& report) {
  std::ostringstream out;
  auto width = [](const std::vector<CoverageRow>& v) {
    std::size_t w = 6;
    for (const auto& r : v) w = std::max(w, r.metric.size());
    return w;
  };
  const auto lw = width(report.peeringdb);
  const auto rw = width(report.other);
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  auto num = [](std::size_t v) {
    auto s = std::to_string(v);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
  };
  auto rjust = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
  out << pad("PeeringDB", lw) << "  " << rjust("# Records", 10) << "  |  " << pad("Other sources", rw) << "  "
      << rjust("# Records", 10) << '\n';
  const auto rows = std::max(report.peeringdb.size(), report.other.size());
  for (std::size_t i = 0; i < rows; ++i) {
    if (i < report.peeringdb.size())
      out << pad(report.peeringdb[i].metric, lw) << "  " << rjust(num(report.peeringdb[i].count), 10);
    else
      out << std::string(lw + 12, ' ');
    out << "  |  ";
    if (i < report.other.size())
      out << pad(report.other[i].metric, rw) << "  " << rjust(num(report.other[i].count), 10);
    out << '\n';
  }
  return out.str();
}

}  // namespace linnaeus::ingest
