#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "linnaeus/ingestion.hpp"
#include "linnaeus/taxonomy.hpp"

namespace linnaeus {

struct LabeledExample {
  Asn asn = 0;
  TagSet tags;
  bool operator==(const LabeledExample&) const = default;
};

struct FoldAssignment {
  std::size_t n_folds = 0;
  std::map<Asn, std::size_t> assignment;
  std::vector<double> proportions;

  /// Indices into `examples` per fold, in example order.
  std::vector<std::vector<std::size_t>> members(std::span<const LabeledExample> examples) const;
};

/// Sechidis-style iterative stratification. Labels are processed rarest first; each
/// example goes to the fold with the largest remaining demand for that label, then the
/// largest remaining capacity, then a seeded random pick. Folds whose capacity is
/// exhausted are only chosen when every fold is exhausted.
FoldAssignment iterative_stratified_split(std::span<const LabeledExample> examples, std::span<const double> proportions,
                                          std::uint64_t seed);

/// k equal-proportion folds.
FoldAssignment kfold_iterative(std::span<const LabeledExample> examples, std::size_t k, std::uint64_t seed);

struct CvSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// One split per fold: that fold is held out, the others train.
std::vector<CvSplit> cv_splits(std::span<const LabeledExample> examples, const FoldAssignment& folds);

/// (1+b^2)pr / (b^2 p + r), 0 when the denominator is 0.
double f_beta(double precision, double recall, double beta);

struct TagMetrics {
  TagId tag;
  std::size_t support = 0;    // true positives + false negatives
  std::size_t predicted = 0;  // true positives + false positives
  std::size_t true_positives = 0;
  double precision = 0;  // 0 when nothing was predicted
  double recall = 0;     // meaningful only when support > 0
  double accuracy = 0;
  double f1 = 0;
  double f_beta = 0;
};

/// Aggregates. Tags with neither support nor predictions are left out of every mean.
/// Tags without support still count toward macro precision and accuracy, but are
/// excluded from macro recall, F1 and F-beta.
struct MetricsReport {
  std::size_t samples = 0;
  double beta = 0.5;
  std::vector<TagMetrics> per_tag;  // universe order
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  double macro_f_beta = 0;
  double avg_per_label_accuracy = 0;
  double subset_accuracy = 0;
  std::vector<TagId> zero_prediction_tags;  // precision reported as 0 by convention
  std::vector<TagId> unsupported_tags;      // no positives in the truth
  std::vector<TagId> inactive_tags;         // neither support nor predictions

  nlohmann::ordered_json to_json() const;
  std::string render_text(const std::string& title = {}) const;
};

MetricsReport compute_metrics(std::span<const TagSet> predictions, std::span<const TagSet> truth,
                              std::span<const TagId> universe, double beta = 0.5);

struct Hyperparameters {
  double c = 1.0;
  double gamma = 0.0;  // unused by the linear kernel
  bool operator==(const Hyperparameters&) const = default;
};

struct CandidateScore {
  Hyperparameters params;
  double macro_f_beta = 0;
  bool failed = false;
  std::string error;
};

struct SelectionResult {
  Hyperparameters best;
  std::vector<CandidateScore> scores;  // grid order
  nlohmann::ordered_json to_json() const;
};

/// Trains on `train` with the given hyperparameters and predicts tag sets for `test`
/// (indices into the example span handed to nested_cv_select).
using TrainPredict = std::function<std::vector<TagSet>(const Hyperparameters&, std::span<const std::size_t> train,
                                                       std::span<const std::size_t> test)>;

/// Inner k-fold CV over `examples` for each candidate; picks the best pooled macro F-beta.
/// Ties prefer smaller C, then smaller gamma. Throws DataError when every candidate fails.
SelectionResult nested_cv_select(std::span<const LabeledExample> examples, std::span<const Hyperparameters> grid,
                                 std::span<const TagId> universe, const TrainPredict& train_predict, std::uint64_t seed,
                                 double beta = 0.5, std::size_t inner_k = 3, std::size_t jobs = 1);

}  // namespace linnaeus
