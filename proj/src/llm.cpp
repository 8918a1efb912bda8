#include "linnaeus/llm.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<TagId> admissible_labels(const PromptLevel& level, const Taxonomy& taxonomy) {
  if (level.level == Level::top) return taxonomy.top_level();
  if (!level.category) throw UsageError("sub-level prompt without a category");
  return taxonomy.children(*level.category);
}

std::vector<std::vector<SemanticContext>> batch_contexts(std::span<const SemanticContext> contexts,
                                                         std::size_t max_batch) {
  if (max_batch == 0) throw UsageError("batch size must be at least 1");
  std::vector<std::vector<SemanticContext>> out;
  for (std::size_t i = 0; i < contexts.size(); i += max_batch) {
    auto end = std::min(contexts.size(), i + max_batch);
    out.emplace_back(contexts.begin() + static_cast<std::ptrdiff_t>(i),
                     contexts.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

namespace {

ordered_json item_json(const SemanticContext& c) {
  auto opt = [](const std::optional<std::string>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json j;
  j["asn"] = c.asn;
  j["as_name"] = opt(c.as_name);
  j["org_name"] = opt(c.org_name);
  j["as_country"] = opt(c.as_country);
  j["org_country"] = opt(c.org_country);
  j["website"] = opt(c.website);
  return j;
}

constexpr std::string_view kLabelsHeader = "Allowed labels:";
constexpr std::string_view kItemsHeader = "Items:";

}  // namespace

std::string_view system_message() {
  return "You are a network operations analyst who labels Internet autonomous systems by the kind of "
         "organization that operates them. You answer with JSON only.";
}

PromptBatch build_prompt(const PromptLevel& level, const Taxonomy& taxonomy, std::span<const FewShotExample> few_shot,
                         std::span<const SemanticContext> items) {
  if (items.empty() || items.size() > kMaxBatch)
    throw UsageError("a prompt holds 1 to " + std::to_string(kMaxBatch) + " items, got " + std::to_string(items.size()));
  const auto allowed = admissible_labels(level, taxonomy);
  const std::set<TagId> allowed_set(allowed.begin(), allowed.end());

  PromptBatch batch;
  batch.level = level;
  for (const auto& id : allowed) batch.labels.emplace_back(id, taxonomy.node(id).description);
  for (const auto& ex : few_shot)
    for (const auto& t : ex.tags)
      if (!allowed_set.contains(t))
        throw DataError("few-shot label '" + t.value + "' is not admissible at this level");
  batch.few_shot.assign(few_shot.begin(), few_shot.end());
  batch.items.assign(items.begin(), items.end());

  std::ostringstream out;
  out << "Classify each autonomous system (AS) below using the " << taxonomy.name() << " taxonomy.\n";
  if (level.level == Level::top) {
    out << "Task: assign the top-level categories that describe the organization operating the AS.\n";
  } else {
    out << "Task: every AS below belongs to the category \"" << level.category->value
        << "\". Assign the sub-categories of \"" << level.category->value << "\" that apply.\n";
  }
  out << "Use only labels from the allowed list. An AS may receive several labels, or none when nothing fits. "
         "Attach a confidence between 0 and 1 to every label you assign.\n\n";

  out << kLabelsHeader << '\n';
  for (const auto& [id, description] : batch.labels) {
    out << "- " << id.value;
    if (!description.empty()) out << ": " << description;
    out << '\n';
  }
  out << '\n';

  if (!few_shot.empty()) {
    out << "Examples:\n";
    for (const auto& ex : few_shot) {
      LlmPrediction p;
      p.asn = ex.context.asn;
      for (const auto& t : ex.tags) p.confidences[t] = 1.0;
      out << "Input: " << item_json(ex.context).dump() << '\n';
      out << "Output: " << render_response(std::span<const LlmPrediction>(&p, 1), &taxonomy) << '\n';
    }
    out << '\n';
  }

  out << kItemsHeader << '\n';
  for (std::size_t i = 0; i < items.size(); ++i) out << (i + 1) << ". " << item_json(items[i]).dump() << '\n';
  out << '\n';
  out << "Respond with a JSON array only, one object per item in item order:\n"
      << R"([{"asn": <integer>, "labels": [{"label": "<allowed label>", "confidence": <number in [0,1]>}], )"
      << R"("rationale": "<one short sentence>"}])" << '\n';
  batch.text = out.str();
  return batch;
}

namespace {

std::string_view strip_fences(std::string_view text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return text;
  text.remove_prefix(first);
  if (text.substr(0, 3) != "```") return text;
  auto nl = text.find('\n');
  if (nl == std::string_view::npos) return text;
  text.remove_prefix(nl + 1);
  auto close = text.rfind("```");
  if (close != std::string_view::npos) text = text.substr(0, close);
  return text;
}

}  // namespace

ParsedResponse parse_response(std::string_view text, std::span<const Asn> expected_asns,
                              const std::set<TagId>& admissible) {
  json doc;
  try {
    doc = json::parse(strip_fences(text));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("response is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("response is not a JSON array");

  const std::set<Asn> expected(expected_asns.begin(), expected_asns.end());
  std::map<Asn, LlmPrediction> by_asn;
  ParsedResponse out;
  for (const auto& obj : doc) {
    if (!obj.is_object()) throw ParseError("response entry is not an object");
    auto asn_it = obj.find("asn");
    if (asn_it == obj.end() || !asn_it->is_number_integer()) throw ParseError("response entry without integer asn");
    const auto raw_asn = asn_it->get<std::int64_t>();
    if (raw_asn <= 0 || raw_asn > 0xffffffffLL) throw ParseError("response asn out of range");
    const auto asn = static_cast<Asn>(raw_asn);
    if (!expected.contains(asn)) throw ParseError("unexpected asn " + std::to_string(asn) + " in response");
    if (by_asn.contains(asn)) throw ParseError("duplicate asn " + std::to_string(asn) + " in response");

    LlmPrediction p;
    p.asn = asn;
    auto labels = obj.find("labels");
    if (labels == obj.end() || !labels->is_array()) throw ParseError("asn " + std::to_string(asn) + ": missing labels array");
    for (const auto& l : *labels) {
      if (!l.is_object()) throw ParseError("asn " + std::to_string(asn) + ": label entry is not an object");
      auto name = l.find("label");
      auto conf = l.find("confidence");
      if (name == l.end() || !name->is_string()) throw ParseError("asn " + std::to_string(asn) + ": label without name");
      if (conf == l.end() || !conf->is_number()) throw ParseError("asn " + std::to_string(asn) + ": label without confidence");
      const double c = conf->get<double>();
      if (!(c >= 0.0 && c <= 1.0))
        throw ParseError("asn " + std::to_string(asn) + ": confidence " + conf->dump() + " outside [0,1]");
      TagId tag(name->get<std::string>());
      if (!admissible.contains(tag)) {
        ++out.dropped_labels;
        continue;
      }
      auto [it, inserted] = p.confidences.emplace(tag, c);
      if (!inserted) it->second = std::max(it->second, c);
    }
    if (auto r = obj.find("rationale"); r != obj.end()) {
      if (!r->is_string()) throw ParseError("asn " + std::to_string(asn) + ": rationale is not a string");
      p.rationale = r->get<std::string>();
    }
    by_asn.emplace(asn, std::move(p));
  }
  for (auto asn : expected_asns) {
    auto it = by_asn.find(asn);
    if (it == by_asn.end()) throw ParseError("response lacks asn " + std::to_string(asn));
    out.predictions.push_back(it->second);
  }
  return out;
}

std::string render_response(std::span<const LlmPrediction> predictions, const Taxonomy* taxonomy) {
  ordered_json arr = ordered_json::array();
  for (const auto& p : predictions) {
    ordered_json o;
    o["asn"] = p.asn;
    auto& labels = o["labels"] = ordered_json::array();
    std::vector<TagId> order;
    if (taxonomy) {
      TagSet keys;
      for (const auto& [t, _] : p.confidences) keys.insert(t);
      order = taxonomy->ordered(keys);
    } else {
      for (const auto& [t, _] : p.confidences) order.push_back(t);
    }
    for (const auto& t : order) labels.push_back({{"label", t.value}, {"confidence", p.confidences.at(t)}});
    o["rationale"] = p.rationale;
    arr.push_back(std::move(o));
  }
  return arr.dump();
}

// ---------------------------------------------------------------------------
// Backends

namespace {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '-') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool contains_sequence(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace

std::string default_keyword(const TagId& tag) {
  std::string k = tag.value;
  std::replace(k.begin(), k.end(), '.', '-');
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

KeywordTable default_keyword_table(const Taxonomy& taxonomy) {
  KeywordTable table;
  for (const auto& n : taxonomy.nodes()) table.emplace_back(default_keyword(n.id), n.id);
  return table;
}

MockBackend::MockBackend(KeywordTable table) {
  for (auto& [keyword, tag] : table) {
    auto tokens = tokenize(keyword);
    if (tokens.empty()) throw UsageError("mock backend: empty keyword for '" + tag.value + "'");
    rules_.emplace_back(std::move(tokens), std::move(tag));
  }
}

std::string MockBackend::complete(const std::string& prompt, const BackendConfig&) {
  std::istringstream in(prompt);
  std::string line;
  std::vector<TagId> allowed;
  std::vector<json> items;
  enum { preamble, labels, items_section } section = preamble;
  while (std::getline(in, line)) {
    if (line == kLabelsHeader) {
      section = labels;
      continue;
    }
    if (line == kItemsHeader) {
      section = items_section;
      continue;
    }
    if (section == labels) {
      if (line.rfind("- ", 0) != 0) {
        section = preamble;
        continue;
      }
      auto id = line.substr(2, line.find(':') == std::string::npos ? std::string::npos : line.find(':') - 2);
      allowed.emplace_back(util::trim(id));
    } else if (section == items_section) {
      auto dot = line.find(". ");
      if (dot == std::string::npos || dot == 0 ||
          !std::all_of(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(dot),
                       [](unsigned char c) { return std::isdigit(c); })) {
        if (!util::trim(line).empty()) section = preamble;
        continue;
      }
      items.push_back(json::parse(line.substr(dot + 2)));
    }
  }
  const std::set<TagId> allowed_set(allowed.begin(), allowed.end());

  std::vector<LlmPrediction> out;
  for (const auto& item : items) {
    LlmPrediction p;
    p.asn = item.at("asn").get<Asn>();
    std::string text;
    for (const char* key : {"as_name", "org_name", "website"})
      if (item.contains(key) && item[key].is_string()) text += item[key].get<std::string>() + " ";
    const auto tokens = tokenize(text);
    std::vector<std::string> hits;
    for (const auto& [keyword, tag] : rules_) {
      if (!allowed_set.contains(tag) || !contains_sequence(tokens, keyword)) continue;
      p.confidences[tag] = 1.0;
      std::string joined;
      for (const auto& k : keyword) joined += (joined.empty() ? "" : " ") + k;
      hits.push_back(joined);
    }
    if (hits.empty()) {
      p.rationale = "no keyword matched";
    } else {
      p.rationale = "matched";
      for (const auto& h : hits) p.rationale += " '" + h + "'";
    }
    out.push_back(std::move(p));
  }
  // Label order follows the allowed list so output is stable.
  ordered_json arr = ordered_json::array();
  for (const auto& p : out) {
    ordered_json o;
    o["asn"] = p.asn;
    auto& labels_json = o["labels"] = ordered_json::array();
    for (const auto& a : allowed)
      if (auto it = p.confidences.find(a); it != p.confidences.end())
        labels_json.push_back({{"label", a.value}, {"confidence", it->second}});
    o["rationale"] = p.rationale;
    arr.push_back(std::move(o));
  }
  return arr.dump();
}

HttpBackend::HttpBackend() {
  if (const char* key = std::getenv("LINNAEUS_LLM_KEY")) api_key_ = key;
}

std::string HttpBackend::complete(const std::string& prompt, const BackendConfig& config) {
  if (config.endpoint.empty()) throw UsageError("http backend: no endpoint configured");
  const auto& url = config.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("http backend: bad endpoint " + url);
  auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);

  ordered_json body;
  body["model"] = config.model;
  body["temperature"] = config.temperature;
  body["top_p"] = config.top_p;
  body["messages"] = ordered_json::array({{{"role", "system"}, {"content", std::string(system_message())}},
                                          {{"role", "user"}, {"content", prompt}}});
  const auto payload = body.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error;
  const int attempts = std::max(1, config.retry_budget);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500) * (1 << (attempt - 1)));
    httplib::Client client(origin);
    client.set_connection_timeout(static_cast<time_t>(config.timeout.count()), 0);
    client.set_read_timeout(static_cast<time_t>(config.timeout.count()), 0);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw BackendError("completion endpoint answered HTTP " + std::to_string(res->status));
    try {
      auto j = json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("completion endpoint returned an unexpected body: ") + e.what());
    }
  }
  throw BackendError("completion endpoint unreachable after " + std::to_string(attempts) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Prediction

std::vector<LlmPrediction> predict_tags(CompletionBackend& backend, const PromptLevel& level, const Taxonomy& taxonomy,
                                        std::span<const SemanticContext> contexts,
                                        std::span<const FewShotExample> few_shot, const BackendConfig& config,
                                        LlmRunStats* stats) {
  const auto batches = batch_contexts(contexts);
  const auto allowed = admissible_labels(level, taxonomy);
  const std::set<TagId> admissible(allowed.begin(), allowed.end());
  std::vector<std::vector<LlmPrediction>> results(batches.size());
  LlmRunStats local;
  LlmRunStats& s = stats ? *stats : local;

  util::parallel_for(batches.size(), std::max<std::size_t>(1, config.max_parallel), [&](std::size_t b) {
    const auto& items = batches[b];
    std::vector<Asn> asns;
    for (const auto& c : items) asns.push_back(c.asn);
    const auto prompt = build_prompt(level, taxonomy, few_shot, items);
    ++s.batches;
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (attempt > 0) ++s.retries;
      const auto text = backend.complete(prompt.text, config);
      try {
        auto parsed = parse_response(text, asns, admissible);
        s.dropped_labels += parsed.dropped_labels;
        results[b] = std::move(parsed.predictions);
        return;
      } catch (const ParseError&) {
      }
    }
    ++s.failed_batches;
    s.unlabeled_items += items.size();
    for (auto asn : asns) results[b].push_back(LlmPrediction{asn, {}, {}, true});
  });

  std::vector<LlmPrediction> out;
  out.reserve(contexts.size());
  for (auto& r : results)
    for (auto& p : r) out.push_back(std::move(p));
  return out;
}

namespace {

TagSet project(const TagSet& tags, const PromptLevel& level, const Taxonomy& taxonomy) {
  return level.level == Level::top ? taxonomy.top_projection(tags) : taxonomy.children_projection(tags, *level.category);
}

bool in_scope(const TagSet& tags, const PromptLevel& level) {
  return level.level == Level::top || tags.contains(*level.category);
}

}  // namespace

std::vector<FineTuneExample> export_finetune_corpus(std::span<const FewShotExample> annotated,
                                                    const PromptLevel& level, const Taxonomy& taxonomy) {
  admissible_labels(level, taxonomy);  // validates the level
  std::vector<FineTuneExample> out;
  for (const auto& ex : annotated) {
    auto check = taxonomy.validate_tagset(ex.tags);
    if (!check.ok()) throw DataError("AS" + std::to_string(ex.context.asn) + ": " + check.violations.front().message);
    if (!in_scope(ex.tags, level)) continue;
    LlmPrediction p;
    p.asn = ex.context.asn;
    for (const auto& t : project(ex.tags, level, taxonomy)) p.confidences[t] = 1.0;
    FineTuneExample fte;
    fte.prompt = build_prompt(level, taxonomy, {}, std::span<const SemanticContext>(&ex.context, 1)).text;
    fte.completion = render_response(std::span<const LlmPrediction>(&p, 1), &taxonomy);
    out.push_back(std::move(fte));
  }
  return out;
}

std::vector<FewShotExample> select_few_shot(std::span<const FewShotExample> pool, const PromptLevel& level,
                                            const Taxonomy& taxonomy, std::size_t count) {
  std::vector<FewShotExample> picked;
  std::set<TagSet> seen;
  std::vector<const FewShotExample*> rest;
  for (const auto& ex : pool) {
    if (picked.size() == count) break;
    if (!in_scope(ex.tags, level)) continue;
    auto labels = project(ex.tags, level, taxonomy);
    if (labels.empty() || !seen.insert(labels).second) {
      rest.push_back(&ex);
      continue;
    }
    picked.push_back({ex.context, std::move(labels)});
  }
  for (const auto* ex : rest) {
    if (picked.size() == count) break;
    picked.push_back({ex->context, project(ex->tags, level, taxonomy)});
  }
  return picked;
}

}  // namespace linnaeus
