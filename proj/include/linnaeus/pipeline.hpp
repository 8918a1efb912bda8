#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "linnaeus/corpus.hpp"
#include "linnaeus/eval.hpp"
#include "linnaeus/features.hpp"
#include "linnaeus/ingestion.hpp"
#include "linnaeus/llm.hpp"
#include "linnaeus/stacking.hpp"
#include "linnaeus/svm.hpp"
#include "linnaeus/taxonomy.hpp"

namespace linnaeus {

struct PipelineConfig {
  std::uint64_t seed = 7;
  double finetune_fraction = 0.7;
  std::size_t folds = 3;
  std::size_t inner_folds = 3;
  double beta = 0.5;
  double threshold = 0.5;      // stacked top-level decision
  double sub_threshold = 0.5;  // language-model confidence at the sub level
  double stacking_c = 1.0;
  std::size_t few_shot = 3;
  std::vector<Hyperparameters> grid;  // empty: default_grid(feature width)
  std::string backend = "mock";
  BackendConfig llm;
  /// Per-level model ids ("top" or a category id); levels not listed use llm.model.
  std::map<std::string, std::string> level_models;

  /// Throws UsageError on out-of-range values.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Prompting setup for one decision level.
struct LevelModel {
  PromptLevel level;
  std::string model;
  std::vector<FewShotExample> few_shot;
};

struct PipelineModel {
  Taxonomy taxonomy;
  PipelineConfig config;
  CategoricalEncoding encoding;
  MultiLabelSvmModel svm;
  StackedModel stacking;
  LevelModel top;
  std::map<TagId, LevelModel> sub;  // categories with children

  /// "# linnaeus-model v1", a seed line, then one "--- <section>" block per component.
  std::string to_artifact() const;
  static PipelineModel from_artifact(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static PipelineModel load(const std::filesystem::path& path);
};

inline constexpr std::string_view kModelHeader = "# linnaeus-model v1";

struct HierarchicalPrediction {
  Asn asn = 0;
  TagSet top_tags;
  TagSet sub_tags;
  TagScores probabilities;  // stacked top-level probabilities, then sub-level confidences consulted
  bool top_unlabeled = false;
  bool llm_failed = false;
  bool svm_only = false;

  TagSet all_tags() const;
  nlohmann::ordered_json to_json(const Taxonomy& taxonomy) const;
  bool operator==(const HierarchicalPrediction&) const = default;
};

HierarchicalPrediction prediction_from_json(const nlohmann::json& j);

struct TrainOptions {
  std::size_t jobs = 1;
};

struct TrainResult {
  explicit TrainResult(PipelineModel m) : model(std::move(m)) {}

  PipelineModel model;
  std::size_t finetune_rows = 0;
  std::size_t eval_rows = 0;
  /// Out-of-fold reports on the evaluation slice.
  MetricsReport top_stacked;
  MetricsReport top_svm;
  MetricsReport top_llm;
  MetricsReport sub_level;
  std::vector<SelectionResult> fold_selection;
  SelectionResult final_selection;
  /// Fine-tune corpora keyed by "top" or category id.
  std::map<std::string, std::vector<FineTuneExample>> finetune;
  std::size_t llm_batches = 0;
  std::size_t llm_failed_batches = 0;

  nlohmann::ordered_json report_json() const;
};

/// Throws DataError when corpus ASNs are missing from `merged` or a fold would be empty.
TrainResult train_pipeline(const AnnotatedCorpus& corpus, std::span<const ingest::MergedAsRecord> merged,
                           CompletionBackend& backend, const Taxonomy& taxonomy, const PipelineConfig& config,
                           const TrainOptions& options = {});

std::vector<HierarchicalPrediction> classify(const PipelineModel& model, std::span<const ingest::MergedAsRecord> records,
                                             CompletionBackend& backend, LlmRunStats* stats = nullptr);

/// Keeps the highest-scoring tag of each exclusivity group (ties: taxonomy order).
TagSet resolve_exclusivity(const TagSet& tags, const TagScores& scores, const Taxonomy& taxonomy);

struct NamespaceSummary {
  std::size_t records = 0;
  std::map<TagId, std::size_t> tag_counts;
  std::size_t unlabeled = 0;
  std::size_t one_tag = 0;
  std::size_t two_tags = 0;
  std::size_t three_plus = 0;  // top-level multiplicity
  std::size_t llm_failed = 0;
  std::size_t svm_only = 0;

  void add(const HierarchicalPrediction& p);
  nlohmann::ordered_json to_json(const Taxonomy& taxonomy) const;
  static NamespaceSummary from_json(const nlohmann::json& j);
  bool operator==(const NamespaceSummary&) const = default;
};

struct NamespaceOptions {
  std::size_t checkpoint_every = 1000;
  bool resume = false;
  /// Stop after this many records in this invocation (simulates an interrupted run).
  std::optional<std::size_t> max_records;
};

struct NamespaceResult {
  NamespaceSummary summary;
  std::size_t processed = 0;  // records classified by this invocation
  bool complete = false;
};

/// Streams `merged_path` through classify() and appends JSON lines to `output_path`.
/// After every chunk the checkpoint records the next record index, the output length and
/// the running summary. Resuming truncates the output to the recorded length. Throws
/// DataError when the checkpoint belongs to a different dataset or model.
NamespaceResult classify_namespace(const PipelineModel& model, const std::filesystem::path& merged_path,
                                   CompletionBackend& backend, const std::filesystem::path& output_path,
                                   const std::filesystem::path& checkpoint_path, const NamespaceOptions& options = {});

}  // namespace linnaeus
