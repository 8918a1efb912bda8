#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "linnaeus/svm.hpp"
#include "linnaeus/taxonomy.hpp"

namespace linnaeus {

using TagScores = std::map<TagId, double>;

/// Language-model confidences followed by structured-model probabilities, each block in
/// the taxonomy's top-level order. Absent entries are 0.
struct MetaFeatureVector {
  std::vector<double> values;
};

/// Throws DataError for keys that are not top-level tags of `taxonomy`.
MetaFeatureVector build_meta_features(const Taxonomy& taxonomy, const TagScores& llm, const TagScores& svm);

struct LinearMetaModel {
  TagId tag;
  bool stub = false;
  double prior = 0.0;
  std::vector<double> weights;
  double bias = 0.0;
  Calibration calibration;

  double decision(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

struct StackingOptions {
  double c = 1.0;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct StackedModel {
  std::vector<TagId> tags;
  std::vector<LinearMetaModel> models;
  std::size_t width = 0;
  double threshold = 0.5;

  nlohmann::ordered_json to_json() const;
  static StackedModel from_json(const nlohmann::json& j);
};

StackedModel fit_stacking(const Matrix& meta_x, const std::vector<TagSet>& labels, std::span<const TagId> tags,
                          const StackingOptions& options = {});

struct StackedPrediction {
  TagSet tags;
  TagScores probabilities;
};

StackedPrediction stacked_predict(const StackedModel& model, std::span<const double> meta);

}  // namespace linnaeus
