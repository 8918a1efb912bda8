#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace linnaeus {

/// Label identifier. Sub-level ids are dot-qualified by their parent ("government.executive").
struct TagId {
  std::string value;

  TagId() = default;
  explicit TagId(std::string v) : value(std::move(v)) {}

  auto operator<=>(const TagId&) const = default;
  const std::string& str() const noexcept { return value; }
};

using TagSet = std::set<TagId>;

TagSet make_tagset(std::initializer_list<std::string_view> ids);

enum class Level { top, sub };

struct CategoryNode {
  TagId id;
  Level level = Level::top;
  std::optional<TagId> parent;
  std::optional<std::string> exclusivity_group;
  std::string description;

  bool operator==(const CategoryNode&) const = default;
};

struct Violation {
  enum class Rule { parent_missing, exclusivity_conflict };
  TagId tag;
  Rule rule;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
};

/// Immutable two-level label schema. Node order is the document order and is
/// the canonical order used for feature slots, prompts and reports.
class Taxonomy {
 public:
  static Taxonomy from_json(const nlohmann::json& doc);
  static Taxonomy parse(std::string_view text);
  static Taxonomy load(const std::filesystem::path& path);

  /// The shipped schemas: "linnaeus-v1", "naicslite-v1", "isic-v1".
  static Taxonomy builtin(std::string_view name);
  static const Taxonomy& default_taxonomy();

  nlohmann::ordered_json to_json() const;

  const std::string& name() const noexcept { return name_; }
  const std::string& version() const noexcept { return version_; }
  const std::vector<CategoryNode>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool contains(const TagId& id) const { return index_.contains(id); }
  const CategoryNode& node(const TagId& id) const;  // throws DataError on unknown id

  const std::vector<TagId>& top_level() const noexcept { return top_; }
  std::vector<TagId> sub_level() const;
  /// Sub-level children of a top-level tag, in document order.
  const std::vector<TagId>& children(const TagId& top) const;
  bool is_leaf(const TagId& top) const { return children(top).empty(); }
  /// Position of a top-level tag in top_level(); throws on non-top ids.
  std::size_t top_index(const TagId& top) const;

  /// Checks that every sub tag's parent is present and that no exclusivity
  /// group is used twice. Throws DataError on unknown ids.
  ValidationResult validate_tagset(const TagSet& tags) const;

  /// Sub-level tags whose parent is in `top_tags`. Throws if a sub tag is passed.
  TagSet admissible_subtags(const TagSet& top_tags) const;

  /// Tags of `tags` in taxonomy order.
  std::vector<TagId> ordered(const TagSet& tags) const;
  TagSet top_projection(const TagSet& tags) const;
  TagSet children_projection(const TagSet& tags, const TagId& top) const;
  /// Sub-level scoring view: sub tags plus leaf top-level tags re-scored at sub level.
  TagSet sub_level_view(const TagSet& tags) const;
  /// Tag universe of sub_level_view, in taxonomy order.
  std::vector<TagId> sub_level_universe() const;

  bool operator==(const Taxonomy& other) const {
    return name_ == other.name_ && version_ == other.version_ && nodes_ == other.nodes_;
  }

 private:
  Taxonomy() = default;
  void index_nodes();

  std::string name_;
  std::string version_;
  std::vector<CategoryNode> nodes_;
  std::map<TagId, std::size_t> index_;
  std::vector<TagId> top_;
  std::map<TagId, std::vector<TagId>> children_;
};

std::string to_string(Level level);
std::string to_string(Violation::Rule rule);

}  // namespace linnaeus
