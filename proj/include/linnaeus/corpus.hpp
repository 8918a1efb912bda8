#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "linnaeus/eval.hpp"
#include "linnaeus/ingestion.hpp"
#include "linnaeus/llm.hpp"
#include "linnaeus/taxonomy.hpp"

namespace linnaeus {

struct AnnotatedCorpus {
  std::string taxonomy_name;
  std::string taxonomy_version;
  std::vector<LabeledExample> rows;
  std::vector<std::string> notes;  // parallel to rows

  bool operator==(const AnnotatedCorpus&) const = default;
};

/// CSV layout:
///   #taxonomy=<name>;version=<version>
///   asn,tags,note
///   64500,government;government.national,annotator-a
/// Tags are ';'-separated in taxonomy order. Unknown columns are ignored; the
/// #taxonomy line is optional but must match when present.
AnnotatedCorpus read_corpus_csv(std::istream& in, const Taxonomy& taxonomy);
void write_corpus_csv(std::ostream& out, const AnnotatedCorpus& corpus, const Taxonomy& taxonomy);
AnnotatedCorpus corpus_from_json(const nlohmann::json& doc, const Taxonomy& taxonomy);
nlohmann::ordered_json to_json(const AnnotatedCorpus& corpus, const Taxonomy& taxonomy);

/// Chooses CSV or JSON by extension (.json means JSON).
AnnotatedCorpus load_corpus(const std::filesystem::path& path, const Taxonomy& taxonomy);
void save_corpus(const std::filesystem::path& path, const AnnotatedCorpus& corpus, const Taxonomy& taxonomy);

struct CorpusStatsRow {
  TagId tag;
  Level level = Level::top;
  std::size_t count = 0;
};

struct CorpusStats {
  std::size_t rows = 0;
  std::vector<CorpusStatsRow> counts;  // taxonomy order

  nlohmann::ordered_json to_json() const;
  std::string render_text() const;
};

CorpusStats corpus_stats(const AnnotatedCorpus& corpus, const Taxonomy& taxonomy);

/// Log-normal parameters per numeric slot plus categorical preferences for one category.
struct NumericProfile {
  std::array<double, kNumericFeatureCount> log_mean{};
  double log_sd = 0.35;
  double users_missing = 0.3;
  double peeringdb_missing = 0.25;
  std::string country;
  std::string traffic_tier;
  std::string geo_scope;
};

struct SyntheticSpec {
  std::map<TagId, std::size_t> per_category;  // top-level tag -> row count
  KeywordTable keywords;                      // fragment placed in names of rows carrying the tag
  std::map<TagId, NumericProfile> generators;  // per top-level tag
  /// Rows of the first category that also carry the second; fraction of the first's count.
  std::vector<std::pair<TagId, TagId>> co_labels;
  double co_label_fraction = 0.0;
  std::uint64_t seed = 7;
  Asn first_asn = 4200000000;
};

/// Every top-level category gets `per_category` rows; each is paired with the next
/// category (taxonomy order) for `co_label_fraction` of its rows.
SyntheticSpec default_synthetic_spec(const Taxonomy& taxonomy, std::size_t per_category, double co_label_fraction,
                                     std::uint64_t seed);

struct SyntheticData {
  AnnotatedCorpus corpus;
  std::vector<ingest::MergedAsRecord> merged;  // sorted by ASN
  KeywordTable mock_table;
};

/// Deterministic in (spec, taxonomy). Throws DataError for tags without a keyword or
/// generator and for keywords that would shadow one another under token matching.
SyntheticData generate_synthetic(const SyntheticSpec& spec, const Taxonomy& taxonomy);

}  // namespace linnaeus
