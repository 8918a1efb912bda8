#include "linnaeus/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "linnaeus/error.hpp"
#include "linnaeus_builtin_taxonomies.hpp"

namespace linnaeus {

TagSet make_tagset(std::initializer_list<std::string_view> ids) {
  TagSet out;
  for (auto id : ids) out.insert(TagId(std::string(id)));
  return out;
}

std::string to_string(Level level) { return level == Level::top ? "top" : "sub"; }

std::string to_string(Violation::Rule rule) {
  switch (rule) {
    case Violation::Rule::parent_missing: return "parent_missing";
    case Violation::Rule::exclusivity_conflict: return "exclusivity_conflict";
  }
  return "unknown";
}

namespace {

std::string required_string(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw DataError(where + ": missing string field '" + key + "'");
  return it->get<std::string>();
}

}  // namespace

Taxonomy Taxonomy::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw DataError("taxonomy: document is not an object");
  Taxonomy t;
  t.name_ = required_string(doc, "name", "taxonomy");
  t.version_ = required_string(doc, "version", "taxonomy");
  auto nodes = doc.find("nodes");
  if (nodes == doc.end() || !nodes->is_array()) throw DataError("taxonomy: missing 'nodes' list");

  for (const auto& raw : *nodes) {
    if (!raw.is_object()) throw DataError("taxonomy: node is not an object");
    CategoryNode n;
    n.id = TagId(required_string(raw, "id", "taxonomy node"));
    if (n.id.value.empty()) throw DataError("taxonomy: empty node id");
    const std::string where = "taxonomy node '" + n.id.value + "'";
    auto level = required_string(raw, "level", where);
    if (level == "top") {
      n.level = Level::top;
    } else if (level == "sub") {
      n.level = Level::sub;
    } else {
      throw DataError(where + ": unknown level '" + level + "'");
    }
    if (auto p = raw.find("parent"); p != raw.end() && !p->is_null()) {
      if (!p->is_string()) throw DataError(where + ": parent must be a string");
      n.parent = TagId(p->get<std::string>());
    }
    if (auto g = raw.find("exclusivity_group"); g != raw.end() && !g->is_null()) {
      if (!g->is_string()) throw DataError(where + ": exclusivity_group must be a string");
      n.exclusivity_group = g->get<std::string>();
    }
    if (auto d = raw.find("description"); d != raw.end() && d->is_string()) n.description = d->get<std::string>();
    t.nodes_.push_back(std::move(n));
  }

  std::set<TagId> seen;
  for (const auto& n : t.nodes_)
    if (!seen.insert(n.id).second) throw DataError("taxonomy: duplicate id '" + n.id.value + "'");

  std::map<TagId, const CategoryNode*> by_id;
  for (const auto& n : t.nodes_) by_id[n.id] = &n;

  std::map<std::string, TagId> group_parent;
  for (const auto& n : t.nodes_) {
    const std::string where = "taxonomy node '" + n.id.value + "'";
    if (n.level == Level::top) {
      if (n.parent) throw DataError(where + ": top-level node must not declare a parent");
      if (n.exclusivity_group)
        throw DataError(where + ": exclusivity groups are only allowed on sub-level nodes");
      continue;
    }
    if (!n.parent) throw DataError(where + ": sub-level node without parent");
    auto p = by_id.find(*n.parent);
    if (p == by_id.end()) throw DataError(where + ": dangling parent '" + n.parent->value + "'");
    if (p->second->level != Level::top)
      throw DataError(where + ": parent '" + n.parent->value + "' is not top-level (only two levels allowed)");
    if (n.id.value.rfind(n.parent->value + ".", 0) != 0)
      throw DataError(where + ": sub-level id must be qualified by its parent '" + n.parent->value + ".'");
    if (n.exclusivity_group) {
      auto [it, inserted] = group_parent.emplace(*n.exclusivity_group, *n.parent);
      if (!inserted && it->second != *n.parent)
        throw DataError(where + ": exclusivity group '" + *n.exclusivity_group + "' spans several parents");
    }
  }

  t.index_nodes();
  return t;
}

void Taxonomy::index_nodes() {
  index_.clear();
  top_.clear();
  children_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    index_.emplace(n.id, i);
    if (n.level == Level::top) {
      top_.push_back(n.id);
      children_[n.id];
    }
  }
  for (const auto& n : nodes_)
    if (n.level == Level::sub) children_[*n.parent].push_back(n.id);
}

Taxonomy Taxonomy::parse(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("taxonomy: ") + e.what());
  }
  return from_json(doc);
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("taxonomy: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

Taxonomy Taxonomy::builtin(std::string_view name) {
  for (const auto& entry : builtin_taxonomies())
    if (entry.name == name) return parse(entry.document);
  throw DataError("taxonomy: no builtin schema named '" + std::string(name) + "'");
}

const Taxonomy& Taxonomy::default_taxonomy() {
  static const Taxonomy t = builtin("linnaeus-v1");
  return t;
}

nlohmann::ordered_json Taxonomy::to_json() const {
  nlohmann::ordered_json doc;
  doc["name"] = name_;
  doc["version"] = version_;
  auto& nodes = doc["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : nodes_) {
    nlohmann::ordered_json j;
    j["id"] = n.id.value;
    j["level"] = to_string(n.level);
    if (n.parent) j["parent"] = n.parent->value;
    if (n.exclusivity_group) j["exclusivity_group"] = *n.exclusivity_group;
    j["description"] = n.description;
    nodes.push_back(std::move(j));
  }
  return doc;
}

const CategoryNode& Taxonomy::node(const TagId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown tag '" + id.value + "' in taxonomy " + name_);
  return nodes_[it->second];
}

std::vector<TagId> Taxonomy::sub_level() const {
  std::vector<TagId> out;
  for (const auto& n : nodes_)
    if (n.level == Level::sub) out.push_back(n.id);
  return out;
}

const std::vector<TagId>& Taxonomy::children(const TagId& top) const {
  auto it = children_.find(top);
  if (it == children_.end()) throw DataError("'" + top.value + "' is not a top-level tag of " + name_);
  return it->second;
}

std::size_t Taxonomy::top_index(const TagId& top) const {
  for (std::size_t i = 0; i < top_.size(); ++i)
    if (top_[i] == top) return i;
  throw DataError("'" + top.value + "' is not a top-level tag of " + name_);
}

ValidationResult Taxonomy::validate_tagset(const TagSet& tags) const {
  ValidationResult result;
  std::map<std::string, TagId> used_groups;
  for (const auto& id : ordered(tags)) {
    const auto& n = node(id);
    if (n.level != Level::sub) continue;
    if (!tags.contains(*n.parent)) {
      result.violations.push_back({id, Violation::Rule::parent_missing,
                                   "'" + id.value + "' requires its parent '" + n.parent->value + "'"});
    }
    if (n.exclusivity_group) {
      auto [it, inserted] = used_groups.emplace(*n.exclusivity_group, id);
      if (!inserted) {
        result.violations.push_back({id, Violation::Rule::exclusivity_conflict,
                                     "'" + id.value + "' conflicts with '" + it->second.value +
                                         "' in exclusivity group '" + *n.exclusivity_group + "'"});
      }
    }
  }
  return result;
}

TagSet Taxonomy::admissible_subtags(const TagSet& top_tags) const {
  TagSet out;
  for (const auto& t : top_tags) {
    if (node(t).level != Level::top)
      throw DataError("admissible_subtags: '" + t.value + "' is not a top-level tag");
    for (const auto& c : children(t)) out.insert(c);
  }
  return out;
}

std::vector<TagId> Taxonomy::ordered(const TagSet& tags) const {
  std::vector<std::pair<std::size_t, TagId>> keyed;
  keyed.reserve(tags.size());
  for (const auto& t : tags) {
    auto it = index_.find(t);
    if (it == index_.end()) throw DataError("unknown tag '" + t.value + "' in taxonomy " + name_);
    keyed.emplace_back(it->second, t);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<TagId> out;
  out.reserve(keyed.size());
  for (auto& [_, t] : keyed) out.push_back(std::move(t));
  return out;
}

TagSet Taxonomy::top_projection(const TagSet& tags) const {
  TagSet out;
  for (const auto& t : tags)
    if (node(t).level == Level::top) out.insert(t);
  return out;
}

TagSet Taxonomy::children_projection(const TagSet& tags, const TagId& top) const {
  TagSet out;
  for (const auto& t : tags) {
    const auto& n = node(t);
    if (n.level == Level::sub && n.parent == top) out.insert(t);
  }
  return out;
}

TagSet Taxonomy::sub_level_view(const TagSet& tags) const {
  TagSet out;
  for (const auto& t : tags) {
    const auto& n = node(t);
    if (n.level == Level::sub || is_leaf(t)) out.insert(t);
  }
  return out;
}

std::vector<TagId> Taxonomy::sub_level_universe() const {
  std::vector<TagId> out;
  for (const auto& n : nodes_)
    if (n.level == Level::sub || is_leaf(n.id)) out.push_back(n.id);
  return out;
}

}  // namespace linnaeus
