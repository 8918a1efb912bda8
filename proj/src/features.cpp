#include "linnaeus/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "linnaeus/error.hpp"

namespace linnaeus {

namespace {

// ISO 3166-1 alpha-2 code followed by continent code, space separated.
constexpr std::string_view kContinents =
    "ADEU AEAS AFAS AGNA AINA ALEU AMAS AOAF AQAN ARSA ASOC ATEU AUOC AWNA AXEU AZAS BAEU BBNA BDAS "
    "BEEU BFAF BGEU BHAS BIAF BJAF BLNA BMNA BNAS BOSA BQNA BRSA BSNA BTAS BVAN BWAF BYEU BZNA CANA "
    "CCAS CDAF CFAF CGAF CHEU CIAF CKOC CLSA CMAF CNAS COSA CRNA CUNA CVAF CWNA CXAS CYAS CZEU DEEU "
    "DJAF DKEU DMNA DONA DZAF ECSA EEEU EGAF EHAF ERAF ESEU ETAF FIEU FJOC FKSA FMOC FOEU FREU GAAF "
    "GBEU GDNA GEAS GFSA GGEU GHAF GIEU GLNA GMAF GNAF GPNA GQAF GREU GSSA GTNA GUOC GWAF GYSA HKAS "
    "HMAN HNNA HREU HTNA HUEU IDAS IEEU ILAS IMEU INAS IOAS IQAS IRAS ISEU ITEU JEEU JMNA JOAS JPAS "
    "KEAF KGAS KHAS KIOC KMAF KNNA KPAS KRAS KWAS KYNA KZAS LAAS LBAS LCNA LIEU LKAS LRAF LSAF LTEU "
    "LUEU LVEU LYAF MAAF MCEU MDEU MEEU MFNA MGAF MHOC MKEU MLAF MMAS MNAS MOAS MPOC MQNA MRAF MSNA "
    "MTEU MUAF MVAS MWAF MXNA MYAS MZAF NAAF NCOC NEAF NFOC NGAF NINA NLEU NOEU NPAS NROC NUOC NZOC "
    "OMAS PANA PESA PFOC PGOC PHAS PKAS PLEU PMNA PNOC PRNA PSAS PTEU PWOC PYSA QAAS REAF ROEU RSEU "
    "RUEU RWAF SAAS SBOC SCAF SDAF SEEU SGAS SHAF SIEU SJEU SKEU SLAF SMEU SNAF SOAF SRSA SSAF STAF "
    "SVNA SXNA SYAS SZAF TCNA TDAF TFAN TGAF THAS TJAS TKOC TLAS TMAS TNAF TOOC TRAS TTNA TVOC TWAS "
    "TZAF UAEU UGAF UMOC USNA UYSA UZAS VAEU VCNA VESA VGNA VINA VNAS VUOC WFOC WSOC XKEU YEAS YTAF "
    "ZAAF ZMAF ZWAF ";

const std::map<std::string, std::string, std::less<>>& continent_table() {
  static const auto table = [] {
    std::map<std::string, std::string, std::less<>> t;
    std::size_t i = 0;
    while (i + 4 <= kContinents.size()) {
      if (kContinents[i] == ' ') {
        ++i;
        continue;
      }
      t.emplace(std::string(kContinents.substr(i, 2)), std::string(kContinents.substr(i + 2, 2)));
      i += 4;
    }
    return t;
  }();
  return table;
}

double to_double(const std::optional<std::uint64_t>& v) { return v ? static_cast<double>(*v) : kMissing; }

}  // namespace

const std::array<std::string_view, kNumericFeatureCount>& numeric_feature_names() {
  static constexpr std::array<std::string_view, kNumericFeatureCount> names{
      "deg_total",  "deg_provider", "deg_customer",        "cone_asns",    "cone_addrs",
      "cone_prefixes", "orig_prefixes", "orig_addrs",      "users",        "ixp_port_mbps_total",
      "n_facilities", "n_facility_countries", "n_cone_countries"};
  return names;
}

std::vector<double> NetworkFeatureVector::dense() const {
  std::vector<double> out(numeric.begin(), numeric.end());
  out.insert(out.end(), categorical.begin(), categorical.end());
  return out;
}

OneHotGroup::OneHotGroup(std::string name, std::vector<std::string> vocabulary)
    : name_(std::move(name)), vocabulary_(std::move(vocabulary)) {
  std::sort(vocabulary_.begin(), vocabulary_.end());
  vocabulary_.erase(std::unique(vocabulary_.begin(), vocabulary_.end()), vocabulary_.end());
}

std::size_t OneHotGroup::slot(const std::optional<std::string>& value) const {
  if (!value) return vocabulary_.size();
  auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), *value);
  if (it == vocabulary_.end() || *it != *value) return vocabulary_.size();
  return static_cast<std::size_t>(it - vocabulary_.begin());
}

std::optional<std::string> primary_country(const ingest::MergedAsRecord& record) {
  if (record.as_country.value) return record.as_country.value;
  return record.org_country.value;
}

std::optional<std::string> continent_of(std::string_view country) {
  const auto& t = continent_table();
  auto it = t.find(country);
  if (it == t.end()) return std::nullopt;
  return it->second;
}

namespace {

std::array<std::optional<std::string>, 4> categorical_values(const ingest::MergedAsRecord& r) {
  auto country = primary_country(r);
  std::optional<std::string> continent;
  if (country) continent = continent_of(*country);
  return {country, continent, r.traffic_tier, r.geo_scope};
}

constexpr std::array<std::string_view, 4> kGroupNames{"country", "continent", "traffic_tier", "geo_scope"};

}  // namespace

CategoricalEncoding CategoricalEncoding::fit(std::span<const ingest::MergedAsRecord> training) {
  std::array<std::set<std::string>, 4> seen;
  for (const auto& r : training) {
    auto values = categorical_values(r);
    for (std::size_t g = 0; g < values.size(); ++g)
      if (values[g]) seen[g].insert(*values[g]);
  }
  CategoricalEncoding enc;
  for (std::size_t g = 0; g < seen.size(); ++g)
    enc.groups_.emplace_back(std::string(kGroupNames[g]), std::vector<std::string>(seen[g].begin(), seen[g].end()));
  return enc;
}

std::size_t CategoricalEncoding::width() const noexcept {
  std::size_t w = 0;
  for (const auto& g : groups_) w += g.width();
  return w;
}

nlohmann::ordered_json CategoricalEncoding::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& g : groups_) j[g.name()] = g.vocabulary();
  return j;
}

CategoricalEncoding CategoricalEncoding::from_json(const nlohmann::json& j) {
  CategoricalEncoding enc;
  try {
    for (auto name : kGroupNames)
      enc.groups_.emplace_back(std::string(name), j.at(std::string(name)).get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("categorical encoding: ") + e.what());
  }
  return enc;
}

NetworkFeatureVector build_network_features(const ingest::MergedAsRecord& r, const CategoricalEncoding& encoding) {
  NetworkFeatureVector v;
  std::optional<double> n_fac, n_fac_countries;
  if (r.facilities) {
    n_fac = static_cast<double>(r.facilities->size());
    std::set<std::string> cc;
    for (const auto& f : *r.facilities)
      if (f.country) cc.insert(*f.country);
    n_fac_countries = static_cast<double>(cc.size());
  }
  v.numeric = {to_double(r.deg_total),
               to_double(r.deg_provider),
               to_double(r.deg_customer),
               to_double(r.cone_asns),
               to_double(r.cone_addrs),
               to_double(r.cone_prefixes),
               to_double(r.orig_prefixes),
               to_double(r.orig_addrs),
               to_double(r.users),
               to_double(r.ixp_port_mbps_total),
               n_fac.value_or(kMissing),
               n_fac_countries.value_or(kMissing),
               // An AS-Rank record without an inferred cone has no cone countries either.
               r.cone_asns ? static_cast<double>(r.cone_countries.size()) : kMissing};
  for (std::size_t i = 0; i < kNumericFeatureCount; ++i) v.missing[i] = std::isnan(v.numeric[i]);

  auto values = categorical_values(r);
  v.categorical.assign(encoding.width(), 0.0);
  std::size_t offset = 0;
  for (std::size_t g = 0; g < encoding.groups().size(); ++g) {
    const auto& group = encoding.groups()[g];
    v.categorical[offset + group.slot(values[g])] = 1.0;
    offset += group.width();
  }
  return v;
}

std::optional<SemanticContext> build_semantic_context(const ingest::MergedAsRecord& r) {
  if (!r.as_name.value && !r.org_name.value) return std::nullopt;
  return SemanticContext{r.asn, r.as_name.value, r.org_name.value, r.as_country.value, r.org_country.value,
                         r.website.value};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty list");
  if (q < 0 || q > 100) throw UsageError("percentile rank out of range");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double access_size_threshold(std::vector<double> cone_sizes) { return percentile(std::move(cone_sizes), 80.0); }

AccessSize classify_access_size(double cone_size, double threshold) {
  return cone_size >= threshold ? AccessSize::large : AccessSize::small;
}

}  // namespace linnaeus
