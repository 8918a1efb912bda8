#include <doctest.h>

#include <sstream>

#include "linnaeus/error.hpp"
#include "linnaeus/ingestion.hpp"
#include "linnaeus/rdap.hpp"
#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace linnaeus;
using namespace linnaeus::ingest;

namespace {

const MergedAsRecord& find(const MergeResult& m, Asn asn) {
  for (const auto& r : m.records)
    if (r.asn == asn) return r;
  throw DataError("asn not merged");
}

MergeResult merge_fixtures(const fixtures::Sources& s, std::size_t* calls = nullptr) {
  auto cache_dir = oracle::temp_dir("rdap-cache");
  auto cache = std::make_shared<RdapCache>(cache_dir);
  RdapOptions opt;
  opt.endpoint = "https://rdap.test";
  opt.backoff = std::chrono::milliseconds(0);
  auto client = std::make_shared<RdapClient>(fixtures::fixture_http(calls), cache.get(), opt);
  auto lookup = [client, cache](const std::vector<Asn>& asns) { return client->lookup()(asns); };
  return merge_records(s.asrank.records, s.peeringdb.records, s.ipinfo.records, s.eyeball.records, lookup);
}

}  // namespace

TEST_SUITE("ingestion") {
  TEST_CASE("coverage counts and row layout") {
    auto s = fixtures::load_sources();
    auto cov = compute_coverage(s.asrank.records, s.peeringdb.records, s.ipinfo.records, s.eyeball.records);
    std::vector<std::pair<std::string, std::size_t>> pdb, other;
    for (const auto& r : cov.peeringdb) pdb.emplace_back(r.metric, r.count);
    for (const auto& r : cov.other) other.emplace_back(r.metric, r.count);
    CHECK(pdb == std::vector<std::pair<std::string, std::size_t>>{{"Total network records", 32},
                                                                  {"Website", 27},
                                                                  {"Network-type", 23},
                                                                  {"Geo-scope", 31},
                                                                  {"Peering-ratio", 31},
                                                                  {"Facility (netfac)", 13},
                                                                  {"IXP LAN (netixlan)", 16}});
    CHECK(other == std::vector<std::pair<std::string, std::size_t>>{{"IPinfo total ASNs", 83},
                                                                    {"Website field present", 77},
                                                                    {"CAIDA AS-Rank ASNs", 119},
                                                                    {"Cones inferred", 77},
                                                                    {"AS-Pop total records", 31}});
    const auto text = render_text(cov);
    CHECK(text.find("Total network records") != std::string::npos);
    CHECK(to_json(cov).dump().find("Cones inferred") != std::string::npos);
  }

  TEST_CASE("asrank parser") {
    auto in = fixtures::open("asrank_corrupt.jsonl");
    auto parsed = parse_asrank(in);
    CHECK(parsed.records.size() == 2);
    CHECK(parsed.report.skipped == 1);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_asrank(empty), DataError);
    auto s = fixtures::load_sources();
    CHECK(s.asrank.records.front().cone_asns == 1u);
    CHECK_FALSE(s.asrank.records.back().cone_asns);
  }

  TEST_CASE("peeringdb parser") {
    auto s = fixtures::load_sources();
    const auto& recs = s.peeringdb.records;
    REQUIRE(recs.size() == 32);
    std::uint64_t total = 0;
    for (const auto& p : recs.front().ixp_ports) total += p.port_capacity_mbps;
    CHECK(recs.front().ixp_ports.size() == 2);
    CHECK(total == 20000);
    CHECK(recs[20].ixp_ports.empty());
    CHECK_FALSE(recs[31].org_name);
    CHECK(recs[0].org_name == "PeeringDB Org 64500");
    std::istringstream bad("{\"org\": {\"data\": []}}");
    CHECK_THROWS_AS(parse_peeringdb(bad), DataError);
  }

  TEST_CASE("csv parsers") {
    auto s = fixtures::load_sources();
    CHECK(s.ipinfo.records.size() == 83);
    CHECK(s.eyeball.records.size() == 31);
    CHECK(s.eyeball.records[2].estimated_users == 3000);
    auto dup = fixtures::open("ipinfo_dup.csv");
    auto d = parse_ipinfo(dup);
    REQUIRE(d.records.size() == 1);
    CHECK(d.records[0].as_name == "SECOND-ROW");
    CHECK(d.report.duplicates == 1);
    CHECK_FALSE(d.report.warnings.empty());
  }

  TEST_CASE("asn and country normalisation") {
    CHECK(parse_asn("AS64500") == 64500u);
    CHECK(parse_asn("64500") == 64500u);
    CHECK_FALSE(parse_asn("0"));
    CHECK_FALSE(parse_asn("ASX"));
    CHECK(normalize_country("de") == "DE");
    CHECK_FALSE(normalize_country("Germany"));
  }

  TEST_CASE("merge priority and provenance") {
    auto s = fixtures::load_sources();
    auto merged = merge_fixtures(s);
    CHECK(merged.report.dropped == 1);
    std::set<Asn> seen;
    for (const auto& r : s.asrank.records) seen.insert(r.asn);
    for (const auto& r : s.peeringdb.records) seen.insert(r.asn);
    for (const auto& r : s.ipinfo.records) seen.insert(r.asn);
    for (const auto& r : s.eyeball.records) seen.insert(r.asn);
    CHECK(merged.records.size() == seen.size() - merged.report.dropped);
    CHECK(merged.records.size() == s.asrank.records.size());

    const auto& both = find(merged, 64500);
    CHECK(both.website.value == "ipinfo64500.example");
    CHECK(both.website.source == Source::ipinfo);
    CHECK(both.ixp_port_mbps_total == 20000u);
    const auto& pdb_only = find(merged, 64501);
    CHECK(pdb_only.website.value == "https://pdb64501.example");
    CHECK(pdb_only.website.source == Source::peeringdb);
    const auto& none = find(merged, 64505);
    CHECK_FALSE(none.website.value);
    CHECK(none.website.source == Source::absent);

    const auto& registry = find(merged, 64600);
    CHECK(registry.as_name == Sourced{"RDAP-NET-64600", Source::rdap});
    CHECK(registry.org_name == Sourced{"Registry Listed Org", Source::rdap});
    CHECK(registry.as_country == Sourced{"NL", Source::rdap});
    const auto& handle = find(merged, 64531);
    CHECK(handle.org_name == Sourced{"ORG-HANDLE-ONLY", Source::rdap});
    CHECK(handle.as_name.source == Source::ipinfo);
    const auto& fallback = find(merged, 64610);
    CHECK(fallback.as_name == Sourced{"RANK-NET-64610", Source::asrank});
    CHECK_FALSE(fallback.facilities);
  }

  TEST_CASE("provenance is sound for every populated field") {
    auto s = fixtures::load_sources();
    auto merged = merge_fixtures(s);
    std::map<Asn, const AsRankRecord*> rank;
    std::map<Asn, const PeeringDbRecord*> pdb;
    std::map<Asn, const IpinfoRecord*> ipi;
    for (const auto& r : s.asrank.records) rank[r.asn] = &r;
    for (const auto& r : s.peeringdb.records) pdb[r.asn] = &r;
    for (const auto& r : s.ipinfo.records) ipi[r.asn] = &r;
    std::size_t checked = 0;
    for (const auto& m : merged.records) {
      auto reread = [&](const char* field, const Sourced& v) -> std::optional<std::string> {
        const std::string f = field;
        switch (v.source) {
          case Source::ipinfo:
            return f == "as_name" ? ipi.at(m.asn)->as_name : f == "website" ? ipi.at(m.asn)->website : ipi.at(m.asn)->country;
          case Source::peeringdb:
            return f == "as_name"   ? pdb.at(m.asn)->as_name
                   : f == "org_name" ? pdb.at(m.asn)->org_name
                   : f == "website"  ? pdb.at(m.asn)->website
                                     : pdb.at(m.asn)->org_country;
          case Source::asrank:
            return f == "as_name"      ? rank.at(m.asn)->as_name
                   : f == "org_name"   ? rank.at(m.asn)->org_name
                   : f == "as_country" ? rank.at(m.asn)->country
                                       : rank.at(m.asn)->org_country;
          case Source::rdap: {
            auto body = fixtures::fixture_http()("x/" + std::to_string(m.asn));
            auto r = parse_rdap(m.asn, body.body);
            return f == "as_name" ? r.name : f == "org_name" ? r.org_name : r.country;
          }
          case Source::absent:
            return std::nullopt;
        }
        return std::nullopt;
      };
      for (auto [name, field] : {std::pair{"as_name", &m.as_name}, {"org_name", &m.org_name},
                                 {"as_country", &m.as_country}, {"org_country", &m.org_country},
                                 {"website", &m.website}}) {
        CHECK(reread(name, *field) == field->value);
        ++checked;
      }
    }
    CHECK(checked == 5 * 119);
  }

  TEST_CASE("merge is deterministic and round-trips through the merged format") {
    auto s = fixtures::load_sources();
    auto a = merge_fixtures(s), b = merge_fixtures(s);
    std::ostringstream oa, ob;
    write_merged(oa, a.records);
    write_merged(ob, b.records);
    CHECK(oa.str() == ob.str());
    std::istringstream in(oa.str());
    CHECK(read_merged(in) == a.records);
    CHECK(oa.str().find("\"provenance\"") != std::string::npos);
  }

  TEST_CASE("rdap cache, absence and handle fixture") {
    auto dir = oracle::temp_dir("rdap");
    RdapCache cache(dir);
    std::size_t calls = 0;
    RdapOptions opt;
    opt.backoff = std::chrono::milliseconds(0);
    RdapClient client(fixtures::fixture_http(&calls), &cache, opt);
    auto first = client.fetch(64600);
    REQUIRE(first);
    CHECK(first->org_name == "Registry Listed Org");
    CHECK(first->contact_emails == std::vector<std::string>{"abuse@rdap.example"});
    CHECK(calls == 1);
    auto again = client.fetch(64600);
    CHECK(calls == 1);
    CHECK(again->org_name == first->org_name);
    CHECK(again->name == first->name);
    CHECK(client.stats().cache_hits == 1);

    CHECK_FALSE(client.fetch(64999));
    CHECK(calls == 2);
    CHECK_FALSE(client.fetch(64999));
    CHECK(calls == 2);

    auto handle = client.fetch(64531);
    REQUIRE(handle);
    CHECK(handle->org_name == "ORG-HANDLE-ONLY");
    CHECK_THROWS_AS(parse_rdap(1, "{oops"), ParseError);
  }

  TEST_CASE("rdap retries transient failures") {
    std::size_t calls = 0;
    RdapOptions opt;
    opt.attempts = 3;
    opt.backoff = std::chrono::milliseconds(0);
    RdapClient client(
        [&](const std::string&) -> HttpResponse {
          ++calls;
          return {503, ""};
        },
        nullptr, opt);
    CHECK_FALSE(client.fetch(64500));
    CHECK(calls == 3);
    CHECK(client.stats().failures == 1);
  }

  TEST_CASE("rdap bootstrap") {
    auto b = RdapBootstrap::parse(nlohmann::json::parse(
        R"({"services":[[["64496-64511","65000"],["https://rdap.one/"]],[["1-100"],["https://rdap.two/"]]]})"));
    CHECK(b.endpoint_for(64500) == "https://rdap.one");
    CHECK(b.endpoint_for(65000) == "https://rdap.one");
    CHECK(b.endpoint_for(50) == "https://rdap.two");
    CHECK_FALSE(b.endpoint_for(70000));
  }
}
