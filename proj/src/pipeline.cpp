#include "linnaeus/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus {

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (!(finetune_fraction > 0.0 && finetune_fraction < 1.0)) throw UsageError("fine-tune fraction must lie in (0, 1)");
  if (folds < 2) throw UsageError("folds must be at least 2");
  if (inner_folds < 2) throw UsageError("inner folds must be at least 2");
  if (!(beta > 0.0)) throw UsageError("beta must be positive");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in [0, 1]");
  if (!(sub_threshold >= 0.0 && sub_threshold <= 1.0)) throw UsageError("sub-level threshold must lie in [0, 1]");
  if (!(stacking_c > 0.0)) throw UsageError("stacking C must be positive");
  for (const auto& h : grid)
    if (!(h.c > 0.0) || !(h.gamma > 0.0)) throw UsageError("grid entries need positive C and gamma");
  if (backend != "mock" && backend != "http") throw UsageError("unknown backend '" + backend + "'");
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["finetune_fraction"] = finetune_fraction;
  j["folds"] = folds;
  j["inner_folds"] = inner_folds;
  j["beta"] = beta;
  j["threshold"] = threshold;
  j["sub_threshold"] = sub_threshold;
  j["stacking_c"] = stacking_c;
  j["few_shot"] = few_shot;
  auto& g = j["grid"] = nlohmann::ordered_json::array();
  for (const auto& h : grid) g.push_back({{"c", h.c}, {"gamma", h.gamma}});
  j["backend"] = backend;
  j["llm"] = {{"endpoint", llm.endpoint},
              {"model", llm.model},
              {"temperature", llm.temperature},
              {"top_p", llm.top_p},
              {"max_parallel", llm.max_parallel},
              {"retry_budget", llm.retry_budget},
              {"timeout_s", llm.timeout.count()}};
  auto& lm = j["level_models"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : level_models) lm[k] = v;
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  try {
    PipelineConfig c;
    c.seed = j.value("seed", c.seed);
    c.finetune_fraction = j.value("finetune_fraction", c.finetune_fraction);
    c.folds = j.value("folds", c.folds);
    c.inner_folds = j.value("inner_folds", c.inner_folds);
    c.beta = j.value("beta", c.beta);
    c.threshold = j.value("threshold", c.threshold);
    c.sub_threshold = j.value("sub_threshold", c.sub_threshold);
    c.stacking_c = j.value("stacking_c", c.stacking_c);
    c.few_shot = j.value("few_shot", c.few_shot);
    if (j.contains("grid"))
      for (const auto& h : j.at("grid")) c.grid.push_back({h.at("c").get<double>(), h.at("gamma").get<double>()});
    c.backend = j.value("backend", c.backend);
    if (j.contains("llm")) {
      const auto& l = j.at("llm");
      c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
      c.llm.model = l.value("model", c.llm.model);
      c.llm.temperature = l.value("temperature", c.llm.temperature);
      c.llm.top_p = l.value("top_p", c.llm.top_p);
      c.llm.max_parallel = l.value("max_parallel", c.llm.max_parallel);
      c.llm.retry_budget = l.value("retry_budget", c.llm.retry_budget);
      c.llm.timeout = std::chrono::seconds(l.value("timeout_s", static_cast<long long>(c.llm.timeout.count())));
    }
    if (j.contains("level_models"))
      for (const auto& [k, v] : j.at("level_models").items()) c.level_models[k] = v.get<std::string>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("pipeline config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Artifact

namespace {

nlohmann::ordered_json opt_json(const std::optional<std::string>& v) { return v ? nlohmann::ordered_json(*v) : nullptr; }

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

nlohmann::ordered_json context_json(const SemanticContext& c) {
  return {{"asn", c.asn},
          {"as_name", opt_json(c.as_name)},
          {"org_name", opt_json(c.org_name)},
          {"as_country", opt_json(c.as_country)},
          {"org_country", opt_json(c.org_country)},
          {"website", opt_json(c.website)}};
}

SemanticContext context_from_json(const nlohmann::json& j) {
  SemanticContext c;
  c.asn = j.at("asn").get<Asn>();
  c.as_name = opt_string(j, "as_name");
  c.org_name = opt_string(j, "org_name");
  c.as_country = opt_string(j, "as_country");
  c.org_country = opt_string(j, "org_country");
  c.website = opt_string(j, "website");
  return c;
}

nlohmann::ordered_json tags_json(const TagSet& tags, const Taxonomy& taxonomy) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : taxonomy.ordered(tags)) arr.push_back(t.value);
  return arr;
}

TagSet tags_from_json(const nlohmann::json& j) {
  TagSet out;
  for (const auto& t : j) out.insert(TagId(t.get<std::string>()));
  return out;
}

nlohmann::ordered_json level_json(const LevelModel& m, const Taxonomy& taxonomy) {
  nlohmann::ordered_json j;
  j["level"] = to_string(m.level.level);
  j["category"] = m.level.category ? nlohmann::ordered_json(m.level.category->value) : nullptr;
  j["model"] = m.model;
  auto& fs = j["few_shot"] = nlohmann::ordered_json::array();
  for (const auto& ex : m.few_shot) fs.push_back({{"context", context_json(ex.context)}, {"tags", tags_json(ex.tags, taxonomy)}});
  return j;
}

LevelModel level_from_json(const nlohmann::json& j) {
  LevelModel m;
  const auto level = j.at("level").get<std::string>();
  if (level == "top") m.level = PromptLevel::top();
  else if (level == "sub") m.level = PromptLevel::sub(TagId(j.at("category").get<std::string>()));
  else throw DataError("model artifact: unknown level '" + level + "'");
  m.model = j.at("model").get<std::string>();
  for (const auto& ex : j.at("few_shot")) m.few_shot.push_back({context_from_json(ex.at("context")), tags_from_json(ex.at("tags"))});
  return m;
}

}  // namespace

std::string PipelineModel::to_artifact() const {
  std::ostringstream out;
  out << kModelHeader << '\n';
  out << "seed " << config.seed << '\n';
  auto section = [&](const char* name, const nlohmann::ordered_json& j) { out << "--- " << name << '\n' << j.dump() << '\n'; };
  section("taxonomy", taxonomy.to_json());
  section("config", config.to_json());
  section("encoding", encoding.to_json());
  section("svm", svm.to_json());
  section("stacking", stacking.to_json());
  nlohmann::ordered_json llm;
  llm["top"] = level_json(top, taxonomy);
  auto& subs = llm["sub"] = nlohmann::ordered_json::object();
  for (const auto& cat : taxonomy.top_level())
    if (auto it = sub.find(cat); it != sub.end()) subs[cat.value] = level_json(it->second, taxonomy);
  section("llm", llm);
  return out.str();
}

PipelineModel PipelineModel::from_artifact(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kModelHeader) throw DataError("not a linnaeus model artifact (bad header)");
  if (!std::getline(in, line) || line.rfind("seed ", 0) != 0) throw DataError("model artifact: missing seed line");
  std::map<std::string, nlohmann::json> sections;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("--- ", 0) != 0) throw DataError("model artifact: expected a section marker, got '" + line.substr(0, 40) + "'");
    const auto name = line.substr(4);
    if (!std::getline(in, line)) throw DataError("model artifact: section '" + name + "' has no body");
    try {
      sections[name] = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("model artifact: section '" + name + "': " + e.what());
    }
  }
  for (const char* required : {"taxonomy", "config", "encoding", "svm", "stacking", "llm"})
    if (!sections.contains(required)) throw DataError(std::string("model artifact: missing section '") + required + "'");

  try {
    PipelineModel m{Taxonomy::from_json(sections.at("taxonomy")),
                    PipelineConfig::from_json(sections.at("config")),
                    CategoricalEncoding::from_json(sections.at("encoding")),
                    MultiLabelSvmModel::from_json(sections.at("svm")),
                    StackedModel::from_json(sections.at("stacking")),
                    level_from_json(sections.at("llm").at("top")),
                    {}};
    for (const auto& [cat, j] : sections.at("llm").at("sub").items()) {
      TagId id(cat);
      if (!m.taxonomy.contains(id) || m.taxonomy.node(id).level != Level::top || m.taxonomy.is_leaf(id))
        throw DataError("model artifact: sub-level model for '" + cat + "', which has no sub-categories");
      m.sub.emplace(id, level_from_json(j));
    }
    if (m.stacking.width != 2 * m.taxonomy.top_level().size())
      throw DataError("model artifact: stacking width does not match the taxonomy");
    if (m.svm.dimension() != m.encoding.dense_width())
      throw DataError("model artifact: svm dimension does not match the feature encoding");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model artifact: ") + e.what());
  }
}

void PipelineModel::save(const std::filesystem::path& path) const { util::write_file_atomic(path, to_artifact()); }

PipelineModel PipelineModel::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("model artifact not found: " + path.string());
  return from_artifact(util::read_file(path));
}

// ---------------------------------------------------------------------------
// Predictions

TagSet HierarchicalPrediction::all_tags() const {
  TagSet out = top_tags;
  out.insert(sub_tags.begin(), sub_tags.end());
  return out;
}

nlohmann::ordered_json HierarchicalPrediction::to_json(const Taxonomy& taxonomy) const {
  nlohmann::ordered_json j;
  j["asn"] = asn;
  j["top_tags"] = tags_json(top_tags, taxonomy);
  j["sub_tags"] = tags_json(sub_tags, taxonomy);
  auto& probs = j["probs"] = nlohmann::ordered_json::object();
  for (const auto& n : taxonomy.nodes())
    if (auto it = probabilities.find(n.id); it != probabilities.end()) probs[n.id.value] = it->second;
  auto& flags = j["flags"] = nlohmann::ordered_json::array();
  if (top_unlabeled) flags.push_back("top_unlabeled");
  if (llm_failed) flags.push_back("llm_failed");
  if (svm_only) flags.push_back("svm_only");
  return j;
}

HierarchicalPrediction prediction_from_json(const nlohmann::json& j) {
  try {
    HierarchicalPrediction p;
    p.asn = j.at("asn").get<Asn>();
    p.top_tags = tags_from_json(j.at("top_tags"));
    p.sub_tags = tags_from_json(j.at("sub_tags"));
    for (const auto& [k, v] : j.at("probs").items()) p.probabilities[TagId(k)] = v.get<double>();
    for (const auto& f : j.at("flags")) {
      const auto flag = f.get<std::string>();
      if (flag == "top_unlabeled") p.top_unlabeled = true;
      else if (flag == "llm_failed") p.llm_failed = true;
      else if (flag == "svm_only") p.svm_only = true;
      else throw DataError("prediction for AS" + std::to_string(p.asn) + ": unknown flag '" + flag + "'");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("prediction line: ") + e.what());
  }
}

TagSet resolve_exclusivity(const TagSet& tags, const TagScores& scores, const Taxonomy& taxonomy) {
  std::map<std::string, TagId> winner;
  TagSet out;
  auto score = [&](const TagId& t) {
    auto it = scores.find(t);
    return it == scores.end() ? 0.0 : it->second;
  };
  for (const auto& t : taxonomy.ordered(tags)) {
    const auto& group = taxonomy.node(t).exclusivity_group;
    if (!group) {
      out.insert(t);
      continue;
    }
    auto [it, fresh] = winner.emplace(*group, t);
    if (!fresh && score(t) > score(it->second)) it->second = t;
  }
  for (const auto& [group, t] : winner) out.insert(t);
  return out;
}

// ---------------------------------------------------------------------------
// Shared inference steps

namespace {

BackendConfig level_config(const PipelineConfig& config, const LevelModel& level) {
  BackendConfig c = config.llm;
  c.model = level.model;
  return c;
}

std::string model_for(const PipelineConfig& config, const std::string& level_key) {
  auto it = config.level_models.find(level_key);
  return it != config.level_models.end() ? it->second : config.llm.model;
}

TagScores row_scores(const Matrix& probs, std::size_t row, const std::vector<TagId>& tags) {
  TagScores s;
  for (std::size_t t = 0; t < tags.size(); ++t) s[tags[t]] = probs(row, t);
  return s;
}

/// Language-model output per record; nullopt for records without names.
struct LlmTopPass {
  std::vector<std::optional<SemanticContext>> contexts;
  std::vector<std::optional<LlmPrediction>> predictions;
};

LlmTopPass run_top_llm(std::span<const ingest::MergedAsRecord> records, CompletionBackend& backend,
                       const Taxonomy& taxonomy, const PipelineConfig& config, const LevelModel& top,
                       LlmRunStats* stats) {
  LlmTopPass pass;
  pass.contexts.reserve(records.size());
  std::vector<SemanticContext> eligible;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < records.size(); ++i) {
    pass.contexts.push_back(build_semantic_context(records[i]));
    if (pass.contexts.back()) {
      eligible.push_back(*pass.contexts.back());
      where.push_back(i);
    }
  }
  pass.predictions.resize(records.size());
  auto preds = predict_tags(backend, top.level, taxonomy, eligible, top.few_shot, level_config(config, top), stats);
  for (std::size_t k = 0; k < where.size(); ++k) pass.predictions[where[k]] = std::move(preds[k]);
  return pass;
}

HierarchicalPrediction decide_top(const Taxonomy& taxonomy, const StackedModel& stacking, Asn asn,
                                  const std::optional<LlmPrediction>& llm, const TagScores& svm) {
  HierarchicalPrediction p;
  p.asn = asn;
  p.svm_only = !llm.has_value();
  p.llm_failed = llm && llm->failed;
  static const TagScores kNone;
  const auto meta = build_meta_features(taxonomy, llm ? llm->confidences : kNone, svm);
  auto stacked = stacked_predict(stacking, meta.values);
  p.top_tags = resolve_exclusivity(stacked.tags, stacked.probabilities, taxonomy);
  p.probabilities = std::move(stacked.probabilities);
  p.top_unlabeled = p.top_tags.empty();
  return p;
}

/// Gated sub-level pass: each category's prompt only sees records whose top set carries it.
void assign_sub_tags(std::vector<HierarchicalPrediction>& preds, const std::vector<std::optional<SemanticContext>>& contexts,
                     CompletionBackend& backend, const Taxonomy& taxonomy, const PipelineConfig& config,
                     const std::map<TagId, LevelModel>& sub, LlmRunStats* stats) {
  for (const auto& category : taxonomy.top_level()) {
    auto level = sub.find(category);
    if (level == sub.end()) continue;
    std::vector<SemanticContext> items;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].top_tags.contains(category) && contexts[i]) {
        items.push_back(*contexts[i]);
        where.push_back(i);
      }
    if (items.empty()) continue;
    auto out = predict_tags(backend, level->second.level, taxonomy, items, level->second.few_shot,
                            level_config(config, level->second), stats);
    for (std::size_t k = 0; k < where.size(); ++k) {
      auto& p = preds[where[k]];
      if (out[k].failed) {
        p.llm_failed = true;
        continue;
      }
      TagSet chosen;
      for (const auto& [tag, conf] : out[k].confidences) {
        p.probabilities[tag] = conf;
        if (conf >= config.sub_threshold) chosen.insert(tag);
      }
      for (const auto& t : resolve_exclusivity(chosen, out[k].confidences, taxonomy)) p.sub_tags.insert(t);
    }
  }
}

Matrix feature_matrix(std::span<const ingest::MergedAsRecord> records, const CategoricalEncoding& encoding) {
  Matrix x(0, encoding.dense_width());
  for (const auto& r : records) x.append_row(build_network_features(r, encoding).dense());
  return x;
}

TagSet threshold_scores(const TagScores& scores, double threshold) {
  TagSet out;
  for (const auto& [tag, s] : scores)
    if (s >= threshold) out.insert(tag);
  return out;
}

}  // namespace

std::vector<HierarchicalPrediction> classify(const PipelineModel& model, std::span<const ingest::MergedAsRecord> records,
                                             CompletionBackend& backend, LlmRunStats* stats) {
  if (records.empty()) return {};
  const auto& taxonomy = model.taxonomy;
  const auto probs = model.svm.predict_proba(feature_matrix(records, model.encoding));
  auto llm = run_top_llm(records, backend, taxonomy, model.config, model.top, stats);

  std::vector<HierarchicalPrediction> preds;
  preds.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    preds.push_back(decide_top(taxonomy, model.stacking, records[i].asn, llm.predictions[i],
                               row_scores(probs, i, model.svm.tags())));
  assign_sub_tags(preds, llm.contexts, backend, taxonomy, model.config, model.sub, stats);
  return preds;
}

// ---------------------------------------------------------------------------
// Training

nlohmann::ordered_json TrainResult::report_json() const {
  nlohmann::ordered_json j;
  j["finetune_rows"] = finetune_rows;
  j["eval_rows"] = eval_rows;
  j["top_stacked"] = top_stacked.to_json();
  j["top_svm"] = top_svm.to_json();
  j["top_llm"] = top_llm.to_json();
  j["sub_level"] = sub_level.to_json();
  auto& folds = j["fold_selection"] = nlohmann::ordered_json::array();
  for (const auto& s : fold_selection) folds.push_back(s.to_json());
  j["final_selection"] = final_selection.to_json();
  j["llm"] = {{"batches", llm_batches}, {"failed_batches", llm_failed_batches}};
  return j;
}

TrainResult train_pipeline(const AnnotatedCorpus& corpus, std::span<const ingest::MergedAsRecord> merged,
                           CompletionBackend& backend, const Taxonomy& taxonomy, const PipelineConfig& config,
                           const TrainOptions& options) {
  config.validate();
  if (corpus.taxonomy_name != taxonomy.name() || corpus.taxonomy_version != taxonomy.version())
    throw DataError("corpus taxonomy " + corpus.taxonomy_name + " " + corpus.taxonomy_version +
                    " does not match the active taxonomy");
  for (const auto& row : corpus.rows) {
    auto check = taxonomy.validate_tagset(row.tags);
    if (!check.ok()) throw DataError("AS" + std::to_string(row.asn) + ": " + check.violations.front().message);
  }

  std::map<Asn, const ingest::MergedAsRecord*> by_asn;
  for (const auto& r : merged) by_asn[r.asn] = &r;
  std::vector<ingest::MergedAsRecord> records;
  records.reserve(corpus.rows.size());
  for (const auto& row : corpus.rows) {
    auto it = by_asn.find(row.asn);
    if (it == by_asn.end()) throw DataError("merged dataset has no record for annotated AS" + std::to_string(row.asn));
    records.push_back(*it->second);
  }

  const std::vector<double> proportions{config.finetune_fraction, 1.0 - config.finetune_fraction};
  const auto slices = iterative_stratified_split(corpus.rows, proportions, config.seed).members(corpus.rows);
  const auto& ft_idx = slices[0];
  const auto& ev_idx = slices[1];

  TrainResult result{PipelineModel{taxonomy, config, {}, {}, {}, {}, {}}};
  result.finetune_rows = ft_idx.size();
  result.eval_rows = ev_idx.size();
  PipelineModel& model = result.model;

  // Language-model levels: few-shot exemplars and fine-tune corpora from the fine-tune slice.
  std::vector<FewShotExample> pool;
  for (auto i : ft_idx)
    if (auto ctx = build_semantic_context(records[i])) pool.push_back({*ctx, corpus.rows[i].tags});
  model.top = {PromptLevel::top(), model_for(config, "top"), select_few_shot(pool, PromptLevel::top(), taxonomy, config.few_shot)};
  result.finetune["top"] = export_finetune_corpus(pool, PromptLevel::top(), taxonomy);
  for (const auto& cat : taxonomy.top_level()) {
    if (taxonomy.is_leaf(cat)) continue;
    const auto level = PromptLevel::sub(cat);
    model.sub[cat] = {level, model_for(config, cat.value), select_few_shot(pool, level, taxonomy, config.few_shot)};
    result.finetune[cat.value] = export_finetune_corpus(pool, level, taxonomy);
  }

  // Evaluation slice.
  std::vector<ingest::MergedAsRecord> ev_records;
  std::vector<LabeledExample> ev_full, ev_top;
  for (auto i : ev_idx) {
    ev_records.push_back(records[i]);
    ev_full.push_back(corpus.rows[i]);
    ev_top.push_back({corpus.rows[i].asn, taxonomy.top_projection(corpus.rows[i].tags)});
  }
  std::vector<TagSet> top_truth, full_truth;
  for (std::size_t i = 0; i < ev_full.size(); ++i) {
    top_truth.push_back(ev_top[i].tags);
    full_truth.push_back(ev_full[i].tags);
  }
  const auto outer = kfold_iterative(ev_full, config.folds, config.seed);
  const auto splits = cv_splits(ev_full, outer);

  model.encoding = CategoricalEncoding::fit(ev_records);
  const Matrix raw = feature_matrix(ev_records, model.encoding);
  const auto grid = config.grid.empty() ? default_grid(model.encoding.dense_width()) : config.grid;
  const auto& universe = taxonomy.top_level();

  SvmOptions svm_options;
  svm_options.seed = config.seed;
  svm_options.jobs = 1;

  auto fit_svm = [&](std::span<const std::size_t> rows, const Hyperparameters& params) {
    std::vector<TagSet> labels;
    for (auto r : rows) labels.push_back(top_truth[r]);
    return fit_multilabel_svm(raw.select_rows(rows), labels, universe, std::span<const Hyperparameters>(&params, 1),
                              svm_options);
  };
  // Hyperparameter search over the rows `base` (indices into the evaluation slice).
  auto select = [&](const std::vector<std::size_t>& base, std::uint64_t seed) {
    std::vector<LabeledExample> examples;
    for (auto r : base) examples.push_back(ev_top[r]);
    TrainPredict train_predict = [&](const Hyperparameters& params, std::span<const std::size_t> train,
                                     std::span<const std::size_t> test) {
      std::vector<std::size_t> tr, te;
      for (auto k : train) tr.push_back(base[k]);
      for (auto k : test) te.push_back(base[k]);
      const auto m = fit_svm(tr, params);
      const auto p = m.predict_proba(raw.select_rows(te));
      std::vector<TagSet> out;
      for (std::size_t r = 0; r < te.size(); ++r) out.push_back(threshold_scores(row_scores(p, r, m.tags()), config.threshold));
      return out;
    };
    return nested_cv_select(examples, grid, universe, train_predict, seed, config.beta, config.inner_folds, options.jobs);
  };

  LlmRunStats stats;
  auto llm = run_top_llm(ev_records, backend, taxonomy, config, model.top, &stats);

  // Out-of-fold structured-model probabilities.
  Matrix oof_svm(ev_records.size(), universe.size(), 0.0);
  for (std::size_t f = 0; f < splits.size(); ++f) {
    const auto& split = splits[f];
    auto selection = select(split.train, config.seed + 1 + f);
    const auto m = fit_svm(split.train, selection.best);
    const auto p = m.predict_proba(raw.select_rows(split.test));
    for (std::size_t r = 0; r < split.test.size(); ++r)
      for (std::size_t t = 0; t < universe.size(); ++t) oof_svm(split.test[r], t) = p(r, t);
    result.fold_selection.push_back(std::move(selection));
  }

  Matrix meta(0, 2 * universe.size());
  for (std::size_t i = 0; i < ev_records.size(); ++i) {
    static const TagScores kNone;
    const auto& l = llm.predictions[i];
    meta.append_row(build_meta_features(taxonomy, l ? l->confidences : kNone, row_scores(oof_svm, i, universe)).values);
  }

  StackingOptions stacking_options;
  stacking_options.c = config.stacking_c;
  stacking_options.threshold = config.threshold;
  stacking_options.seed = config.seed;
  stacking_options.jobs = options.jobs;

  // Out-of-fold stacked decisions for the report.
  std::vector<HierarchicalPrediction> oof(ev_records.size());
  for (const auto& split : splits) {
    std::vector<TagSet> labels;
    for (auto r : split.train) labels.push_back(top_truth[r]);
    const auto stacked = fit_stacking(meta.select_rows(split.train), labels, universe, stacking_options);
    for (auto r : split.test)
      oof[r] = decide_top(taxonomy, stacked, ev_records[r].asn, llm.predictions[r], row_scores(oof_svm, r, universe));
  }
  assign_sub_tags(oof, llm.contexts, backend, taxonomy, config, model.sub, &stats);

  std::vector<TagSet> pred_top, pred_svm, pred_llm, pred_sub, truth_sub;
  for (std::size_t i = 0; i < ev_records.size(); ++i) {
    pred_top.push_back(oof[i].top_tags);
    pred_svm.push_back(threshold_scores(row_scores(oof_svm, i, universe), config.threshold));
    const auto& l = llm.predictions[i];
    pred_llm.push_back(l ? taxonomy.top_projection(threshold_scores(l->confidences, config.threshold)) : TagSet{});
    pred_sub.push_back(taxonomy.sub_level_view(oof[i].all_tags()));
    truth_sub.push_back(taxonomy.sub_level_view(full_truth[i]));
  }
  result.top_stacked = compute_metrics(pred_top, top_truth, universe, config.beta);
  result.top_svm = compute_metrics(pred_svm, top_truth, universe, config.beta);
  result.top_llm = compute_metrics(pred_llm, top_truth, universe, config.beta);
  result.sub_level = compute_metrics(pred_sub, truth_sub, taxonomy.sub_level_universe(), config.beta);

  // Final components on the whole evaluation slice.
  model.stacking = fit_stacking(meta, top_truth, universe, stacking_options);
  std::vector<std::size_t> all(ev_records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  result.final_selection = select(all, config.seed);
  model.svm = fit_svm(all, result.final_selection.best);

  result.llm_batches = stats.batches;
  result.llm_failed_batches = stats.failed_batches;
  return result;
}

// ---------------------------------------------------------------------------
// Namespace runs

void NamespaceSummary::add(const HierarchicalPrediction& p) {
  ++records;
  for (const auto& t : p.top_tags) ++tag_counts[t];
  for (const auto& t : p.sub_tags) ++tag_counts[t];
  switch (p.top_tags.size()) {
    case 0: ++unlabeled; break;
    case 1: ++one_tag; break;
    case 2: ++two_tags; break;
    default: ++three_plus; break;
  }
  if (p.llm_failed) ++llm_failed;
  if (p.svm_only) ++svm_only;
}

nlohmann::ordered_json NamespaceSummary::to_json(const Taxonomy& taxonomy) const {
  nlohmann::ordered_json j;
  j["records"] = records;
  auto& tags = j["tags"] = nlohmann::ordered_json::object();
  for (const auto& n : taxonomy.nodes()) {
    auto it = tag_counts.find(n.id);
    tags[n.id.value] = it == tag_counts.end() ? 0 : it->second;
  }
  j["multiplicity"] = {{"unlabeled", unlabeled}, {"1", one_tag}, {"2", two_tags}, {"3+", three_plus}};
  j["flags"] = {{"llm_failed", llm_failed}, {"svm_only", svm_only}};
  return j;
}

NamespaceSummary NamespaceSummary::from_json(const nlohmann::json& j) {
  NamespaceSummary s;
  s.records = j.at("records").get<std::size_t>();
  for (const auto& [k, v] : j.at("tags").items())
    if (auto n = v.get<std::size_t>(); n > 0) s.tag_counts[TagId(k)] = n;
  const auto& m = j.at("multiplicity");
  s.unlabeled = m.at("unlabeled").get<std::size_t>();
  s.one_tag = m.at("1").get<std::size_t>();
  s.two_tags = m.at("2").get<std::size_t>();
  s.three_plus = m.at("3+").get<std::size_t>();
  s.llm_failed = j.at("flags").at("llm_failed").get<std::size_t>();
  s.svm_only = j.at("flags").at("svm_only").get<std::size_t>();
  return s;
}

namespace {

void append_synced(const std::filesystem::path& path, std::string_view data) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw DataError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw DataError("write to " + path.string() + " failed: " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw DataError("fsync of " + path.string() + " failed: " + std::strerror(err));
  }
  ::close(fd);
}

struct Checkpoint {
  std::string dataset_sha256;
  std::string model_sha256;
  std::size_t next_index = 0;
  std::uintmax_t output_bytes = 0;
  bool complete = false;
  NamespaceSummary summary;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c, const Taxonomy& taxonomy) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["dataset_sha256"] = c.dataset_sha256;
  j["model_sha256"] = c.model_sha256;
  j["next_index"] = c.next_index;
  j["output_bytes"] = c.output_bytes;
  j["complete"] = c.complete;
  j["summary"] = c.summary.to_json(taxonomy);
  util::write_file_atomic(path, j.dump(1) + "\n");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(util::read_file(path));
    if (j.at("version").get<int>() != 1) throw DataError("unsupported checkpoint version in " + path.string());
    Checkpoint c;
    c.dataset_sha256 = j.at("dataset_sha256").get<std::string>();
    c.model_sha256 = j.at("model_sha256").get<std::string>();
    c.next_index = j.at("next_index").get<std::size_t>();
    c.output_bytes = j.at("output_bytes").get<std::uintmax_t>();
    c.complete = j.at("complete").get<bool>();
    c.summary = NamespaceSummary::from_json(j.at("summary"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace

NamespaceResult classify_namespace(const PipelineModel& model, const std::filesystem::path& merged_path,
                                   CompletionBackend& backend, const std::filesystem::path& output_path,
                                   const std::filesystem::path& checkpoint_path, const NamespaceOptions& options) {
  if (options.checkpoint_every == 0) throw UsageError("checkpoint interval must be positive");
  if (!std::filesystem::exists(merged_path)) throw DataError("merged dataset not found: " + merged_path.string());

  Checkpoint state;
  state.dataset_sha256 = util::sha256_file(merged_path);
  state.model_sha256 = util::sha256_hex(model.to_artifact());

  if (options.resume && std::filesystem::exists(checkpoint_path)) {
    auto saved = read_checkpoint(checkpoint_path);
    if (saved.dataset_sha256 != state.dataset_sha256)
      throw DataError("checkpoint " + checkpoint_path.string() + " was written for a different merged dataset");
    if (saved.model_sha256 != state.model_sha256)
      throw DataError("checkpoint " + checkpoint_path.string() + " was written for a different model");
    if (!std::filesystem::exists(output_path) || std::filesystem::file_size(output_path) < saved.output_bytes)
      throw DataError("prediction file " + output_path.string() + " is shorter than its checkpoint records");
    std::filesystem::resize_file(output_path, saved.output_bytes);
    state = std::move(saved);
    if (state.complete) return {state.summary, 0, true};
  } else {
    util::write_file_atomic(output_path, "");
    std::filesystem::remove(checkpoint_path);
  }

  std::ifstream in(merged_path);
  if (!in) throw DataError("cannot open merged dataset " + merged_path.string());
  ingest::MergedReader reader(in);
  for (std::size_t i = 0; i < state.next_index; ++i)
    if (!reader.next()) throw DataError("merged dataset is shorter than the checkpoint's record index");

  NamespaceResult result;
  bool exhausted = false;
  while (true) {
    std::size_t budget = options.checkpoint_every;
    if (options.max_records) budget = std::min(budget, *options.max_records - result.processed);
    if (budget == 0) break;
    std::vector<ingest::MergedAsRecord> chunk;
    while (chunk.size() < budget) {
      auto rec = reader.next();
      if (!rec) {
        exhausted = true;
        break;
      }
      chunk.push_back(std::move(*rec));
    }
    if (!chunk.empty()) {
      const auto preds = classify(model, chunk, backend);
      std::string lines;
      for (const auto& p : preds) {
        lines += p.to_json(model.taxonomy).dump();
        lines += '\n';
        state.summary.add(p);
      }
      append_synced(output_path, lines);
      state.next_index += chunk.size();
      state.output_bytes += lines.size();
      result.processed += chunk.size();
    }
    if (exhausted) break;
    write_checkpoint(checkpoint_path, state, model.taxonomy);
  }
  if (!exhausted && !reader.next()) exhausted = true;
  state.complete = exhausted;
  write_checkpoint(checkpoint_path, state, model.taxonomy);
  result.summary = state.summary;
  result.complete = exhausted;
  return result;
}

}  // namespace linnaeus
