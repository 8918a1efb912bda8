#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linnaeus/features.hpp"
#include "linnaeus/stacking.hpp"
#include "linnaeus/taxonomy.hpp"

namespace linnaeus {

/// Which decision a prompt asks for: the top level, or the children of one category.
struct PromptLevel {
  Level level = Level::top;
  std::optional<TagId> category;

  static PromptLevel top() { return {}; }
  static PromptLevel sub(TagId category) { return {Level::sub, std::move(category)}; }
  bool operator==(const PromptLevel&) const = default;
};

struct FewShotExample {
  SemanticContext context;
  TagSet tags;
};

inline constexpr std::size_t kMaxBatch = 10;

struct PromptBatch {
  PromptLevel level;
  std::vector<std::pair<TagId, std::string>> labels;  // admissible ids with descriptions
  std::vector<FewShotExample> few_shot;
  std::vector<SemanticContext> items;
  std::string text;
};

/// Labels a prompt at `level` may use, in taxonomy order.
std::vector<TagId> admissible_labels(const PromptLevel& level, const Taxonomy& taxonomy);

std::vector<std::vector<SemanticContext>> batch_contexts(std::span<const SemanticContext> contexts,
                                                         std::size_t max_batch = kMaxBatch);

/// Throws UsageError for 0 or more than 10 items and DataError for few-shot labels outside the level.
PromptBatch build_prompt(const PromptLevel& level, const Taxonomy& taxonomy, std::span<const FewShotExample> few_shot,
                         std::span<const SemanticContext> items);

struct LlmPrediction {
  Asn asn = 0;
  TagScores confidences;
  std::string rationale;
  bool failed = false;  // the batch never produced a parseable response
  bool operator==(const LlmPrediction&) const = default;
};

struct ParsedResponse {
  std::vector<LlmPrediction> predictions;  // expected-asn order
  std::size_t dropped_labels = 0;
};

/// Strict reader for the response schema
///   [{"asn": int, "labels": [{"label": string, "confidence": number}], "rationale": string}]
/// Throws ParseError on malformed text, missing/duplicate/unexpected asn, or confidences outside [0, 1].
ParsedResponse parse_response(std::string_view text, std::span<const Asn> expected_asns,
                              const std::set<TagId>& admissible);

/// Serializes predictions in the response schema. Labels follow taxonomy order when given.
std::string render_response(std::span<const LlmPrediction> predictions, const Taxonomy* taxonomy = nullptr);

struct BackendConfig {
  std::string endpoint;
  std::string model;
  double temperature = 0.0;
  double top_p = 1.0;
  std::size_t max_parallel = 4;
  int retry_budget = 3;
  std::chrono::seconds timeout{60};
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  /// Returns the raw completion text. Throws BackendError on hard failure.
  virtual std::string complete(const std::string& prompt, const BackendConfig& config) = 0;
  virtual std::string name() const = 0;
};

/// Keyword -> tag rules, matched case-insensitively on whole tokens of the item's names and website.
using KeywordTable = std::vector<std::pair<std::string, TagId>>;

/// One keyword per tag: the tag id with '.' and '_' replaced by '-'.
KeywordTable default_keyword_table(const Taxonomy& taxonomy);
std::string default_keyword(const TagId& tag);

/// Offline backend. Reads allowed labels and items back out of the prompt text, so it
/// speaks the same wire format as a hosted model.
class MockBackend final : public CompletionBackend {
 public:
  explicit MockBackend(KeywordTable table);
  std::string complete(const std::string& prompt, const BackendConfig& config) override;
  std::string name() const override { return "mock"; }

 private:
  std::vector<std::pair<std::vector<std::string>, TagId>> rules_;
};

/// Chat-completions style HTTP backend. The API key is read from LINNAEUS_LLM_KEY.
class HttpBackend final : public CompletionBackend {
 public:
  HttpBackend();
  std::string complete(const std::string& prompt, const BackendConfig& config) override;
  std::string name() const override { return "http"; }

 private:
  std::string api_key_;
};

/// Fixed system message sent alongside each prompt.
std::string_view system_message();

struct LlmRunStats {
  std::atomic<std::size_t> batches{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<std::size_t> failed_batches{0};
  std::atomic<std::size_t> unlabeled_items{0};
  std::atomic<std::size_t> dropped_labels{0};
};

/// Batches, prompts, parses. A batch whose response fails to parse is retried once and
/// then left unlabeled (empty confidences). Output order matches `contexts`.
std::vector<LlmPrediction> predict_tags(CompletionBackend& backend, const PromptLevel& level, const Taxonomy& taxonomy,
                                        std::span<const SemanticContext> contexts,
                                        std::span<const FewShotExample> few_shot, const BackendConfig& config,
                                        LlmRunStats* stats = nullptr);

struct FineTuneExample {
  std::string prompt;
  std::string completion;
};

/// One prompt/completion pair per annotated AS. At a sub level only ASes carrying that
/// category are exported, mirroring how sub-level prompts are gated at inference.
std::vector<FineTuneExample> export_finetune_corpus(std::span<const FewShotExample> annotated,
                                                    const PromptLevel& level, const Taxonomy& taxonomy);

/// Deterministic few-shot pick: up to `count` examples, preferring distinct label sets.
std::vector<FewShotExample> select_few_shot(std::span<const FewShotExample> pool, const PromptLevel& level,
                                            const Taxonomy& taxonomy, std::size_t count);

}  // namespace linnaeus
