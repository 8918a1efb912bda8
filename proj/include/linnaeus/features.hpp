#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "linnaeus/ingestion.hpp"

namespace linnaeus {

inline constexpr std::size_t kNumericFeatureCount = 13;

/// Slot names of the numeric block, in vector order.
const std::array<std::string_view, kNumericFeatureCount>& numeric_feature_names();

/// Sentinel for a missing numeric slot.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct NetworkFeatureVector {
  std::array<double, kNumericFeatureCount> numeric{};
  std::array<bool, kNumericFeatureCount> missing{};
  std::vector<double> categorical;  // concatenated one-hot groups

  /// numeric block followed by the categorical block.
  std::vector<double> dense() const;
};

/// One categorical group: a fixed value vocabulary plus a trailing "unknown" bucket.
class OneHotGroup {
 public:
  OneHotGroup() = default;
  OneHotGroup(std::string name, std::vector<std::string> vocabulary);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  std::size_t width() const noexcept { return vocabulary_.size() + 1; }
  std::size_t slot(const std::optional<std::string>& value) const;

  bool operator==(const OneHotGroup&) const = default;

 private:
  std::string name_;
  std::vector<std::string> vocabulary_;  // sorted
};

/// Category-to-slot maps learned from training records.
class CategoricalEncoding {
 public:
  static CategoricalEncoding fit(std::span<const ingest::MergedAsRecord> training);
  static CategoricalEncoding from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;

  const std::vector<OneHotGroup>& groups() const noexcept { return groups_; }
  std::size_t width() const noexcept;
  std::size_t dense_width() const noexcept { return kNumericFeatureCount + width(); }

  bool operator==(const CategoricalEncoding&) const = default;

 private:
  std::vector<OneHotGroup> groups_;  // country, continent, traffic_tier, geo_scope
};

/// Registered country used for the country/continent groups: AS registration, else org registration.
std::optional<std::string> primary_country(const ingest::MergedAsRecord& record);

/// Two-letter continent code for an ISO 3166-1 alpha-2 country.
std::optional<std::string> continent_of(std::string_view country);

NetworkFeatureVector build_network_features(const ingest::MergedAsRecord& record, const CategoricalEncoding& encoding);

struct SemanticContext {
  Asn asn = 0;
  std::optional<std::string> as_name;
  std::optional<std::string> org_name;
  std::optional<std::string> as_country;
  std::optional<std::string> org_country;
  std::optional<std::string> website;

  bool operator==(const SemanticContext&) const = default;
};

/// nullopt when both names are absent (nothing for the language model to read).
std::optional<SemanticContext> build_semantic_context(const ingest::MergedAsRecord& record);

/// 80th percentile of the cone sizes, linear interpolation between closest ranks.
double access_size_threshold(std::vector<double> cone_sizes);
/// Generic linear-interpolation percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

enum class AccessSize { small, large };
AccessSize classify_access_size(double cone_size, double threshold);

}  // namespace linnaeus
