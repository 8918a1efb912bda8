#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace linnaeus {

using Asn = std::uint32_t;

namespace ingest {

struct AsRankRecord {
  Asn asn = 0;
  std::optional<std::string> as_name;
  std::optional<std::string> org_name;
  std::optional<std::string> country;
  std::optional<std::string> org_country;
  // Cone fields stay empty when AS-Rank did not infer a cone for the AS.
  std::optional<std::uint64_t> cone_asns;
  std::optional<std::uint64_t> cone_addresses;
  std::optional<std::uint64_t> cone_prefixes;
  std::optional<std::uint64_t> degree_total;
  std::optional<std::uint64_t> degree_provider;
  std::optional<std::uint64_t> degree_customer;
  std::optional<std::uint64_t> degree_peer;
  std::optional<std::uint64_t> originated_addresses;
  std::optional<std::uint64_t> originated_prefixes;
  std::vector<std::string> cone_countries;
};

struct Facility {
  std::uint64_t id = 0;
  std::optional<std::string> city;
  std::optional<std::string> country;
  bool operator==(const Facility&) const = default;
};

struct IxpPort {
  std::uint64_t ixp_id = 0;
  std::uint64_t port_capacity_mbps = 0;
};

struct PeeringDbRecord {
  Asn asn = 0;
  std::optional<std::string> as_name;
  std::optional<std::string> org_name;
  std::optional<std::string> org_country;
  std::optional<std::string> website;
  std::optional<std::string> network_type;
  std::optional<std::string> traffic_tier;
  std::optional<std::string> traffic_asymmetry;  // info_ratio, verbatim
  std::optional<std::string> geo_scope;
  std::vector<Facility> facilities;
  std::vector<IxpPort> ixp_ports;
};

struct IpinfoRecord {
  Asn asn = 0;
  std::optional<std::string> as_name;
  std::optional<std::string> website;
  std::optional<std::string> country;
};

struct EyeballRecord {
  Asn asn = 0;
  std::uint64_t estimated_users = 0;
  std::optional<std::string> sample_country;
};

struct RdapRecord {
  Asn asn = 0;
  std::optional<std::string> name;
  std::optional<std::string> org_name;
  std::optional<std::string> country;
  std::vector<std::string> contact_emails;
};

struct ParseReport {
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;
};

template <class Record>
struct Parsed {
  std::vector<Record> records;  // sorted by ASN, one per ASN
  ParseReport report;
};

/// AS-Rank export: one JSON object per line in the AS-Rank API `asn` node shape.
Parsed<AsRankRecord> parse_asrank(std::istream& in);
/// PeeringDB dump: a JSON document with `net`, and optionally `org`, `netfac`, `fac`, `netixlan`.
Parsed<PeeringDbRecord> parse_peeringdb(std::istream& in);
Parsed<PeeringDbRecord> parse_peeringdb(const nlohmann::json& doc);
/// IPinfo ASN CSV with header columns asn, name, domain, country.
Parsed<IpinfoRecord> parse_ipinfo(std::istream& in);
/// APNIC eyeball CSV with header columns asn, users and optionally cc.
Parsed<EyeballRecord> parse_eyeball(std::istream& in);

/// Normalizes a two-letter country code; anything else is absent.
std::optional<std::string> normalize_country(std::string_view raw);
/// Accepts "64500" or "AS64500". Returns nullopt for anything else or for 0.
std::optional<Asn> parse_asn(std::string_view raw);

enum class Source { ipinfo, peeringdb, rdap, asrank, absent };
std::string to_string(Source s);
Source source_from_string(std::string_view s);

struct Sourced {
  std::optional<std::string> value;
  Source source = Source::absent;
  bool operator==(const Sourced&) const = default;
};

struct MergedAsRecord {
  Asn asn = 0;
  Sourced as_name;
  Sourced org_name;
  Sourced as_country;
  Sourced org_country;
  Sourced website;
  std::optional<std::uint64_t> users;
  std::optional<std::uint64_t> cone_asns;
  std::optional<std::uint64_t> cone_addrs;
  std::optional<std::uint64_t> cone_prefixes;
  std::optional<std::uint64_t> deg_total;
  std::optional<std::uint64_t> deg_provider;
  std::optional<std::uint64_t> deg_customer;
  std::optional<std::uint64_t> deg_peer;
  std::optional<std::uint64_t> orig_addrs;
  std::optional<std::uint64_t> orig_prefixes;
  std::vector<std::string> cone_countries;
  // Both empty when the AS has no PeeringDB record.
  std::optional<std::vector<Facility>> facilities;
  std::optional<std::uint64_t> ixp_port_mbps_total;
  std::optional<std::string> traffic_tier;
  std::optional<std::string> traffic_asym;
  std::optional<std::string> geo_scope;

  bool operator==(const MergedAsRecord&) const = default;
};

/// Resolves RDAP records for the ASNs still lacking org metadata. Missing keys mean "absent".
using RdapLookup = std::function<std::map<Asn, RdapRecord>(const std::vector<Asn>&)>;

struct MergeReport {
  std::size_t merged = 0;
  std::size_t dropped = 0;  // ASNs seen in enrichment sources but not in AS-Rank
  std::size_t rdap_requested = 0;
  std::size_t rdap_resolved = 0;
};

struct MergeResult {
  std::vector<MergedAsRecord> records;  // sorted by ASN
  MergeReport report;
};

/// Fuses the sources under the priority IPinfo > PeeringDB > RDAP > AS-Rank for
/// semantic fields. Topology counts come from AS-Rank only.
MergeResult merge_records(const std::vector<AsRankRecord>& asrank, const std::vector<PeeringDbRecord>& peeringdb,
                          const std::vector<IpinfoRecord>& ipinfo, const std::vector<EyeballRecord>& eyeball,
                          const RdapLookup& rdap = {});

nlohmann::ordered_json to_json(const MergedAsRecord& r);
MergedAsRecord merged_from_json(const nlohmann::json& j);

inline constexpr int kMergedSchemaVersion = 1;
/// Line-delimited JSON with a schema header line.
void write_merged(std::ostream& out, const std::vector<MergedAsRecord>& records);
std::vector<MergedAsRecord> read_merged(std::istream& in);

/// Streaming reader over a merged dataset.
class MergedReader {
 public:
  explicit MergedReader(std::istream& in);
  std::optional<MergedAsRecord> next();
  std::size_t index() const noexcept { return index_; }

 private:
  std::istream& in_;
  std::size_t index_ = 0;
};

struct CoverageRow {
  std::string metric;
  std::size_t count = 0;
};

/// Per-source field coverage, laid out as PeeringDB detail rows and summary rows for the other sources.
struct CoverageReport {
  std::vector<CoverageRow> peeringdb;
  std::vector<CoverageRow> other;
};

CoverageReport compute_coverage(const std::vector<AsRankRecord>& asrank, const std::vector<PeeringDbRecord>& peeringdb,
                                const std::vector<IpinfoRecord>& ipinfo, const std::vector<EyeballRecord>& eyeball);
nlohmann::ordered_json to_json(const CoverageReport& report);
std::string render_text(const CoverageReport& report);

}  // namespace ingest
}  // namespace linnaeus
