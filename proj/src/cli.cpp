#include "linnaeus/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linnaeus/corpus.hpp"
#include "linnaeus/eval.hpp"
#include "linnaeus/ingestion.hpp"
#include "linnaeus/llm.hpp"
#include "linnaeus/pipeline.hpp"
#include "linnaeus/rdap.hpp"
#include "linnaeus/taxonomy.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kToolVersion = "0.1.0";

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return kExitUsage;
    case ErrorKind::data: return kExitData;
    case ErrorKind::backend: return kExitBackend;
    case ErrorKind::internal: return kExitInternal;
  }
  return kExitInternal;
}

namespace {

Taxonomy resolve_taxonomy(const std::string& spec) {
  if (fs::exists(spec)) return Taxonomy::load(spec);
  return Taxonomy::builtin(spec);
}

std::ifstream open_input(const std::string& flag, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(flag + ": cannot open " + path.string());
  return in;
}

std::vector<ingest::MergedAsRecord> load_merged(const fs::path& path) {
  auto in = open_input("--merged", path);
  return ingest::read_merged(in);
}

KeywordTable load_keyword_table(const fs::path& path) {
  try {
    const auto doc = nlohmann::json::parse(util::read_file(path));
    KeywordTable table;
    for (const auto& row : doc) table.emplace_back(row.at("keyword").get<std::string>(), TagId(row.at("tag").get<std::string>()));
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("--mock-table " + path.string() + ": " + e.what());
  }
}

std::string keyword_table_json(const KeywordTable& table) {
  auto arr = ojson::array();
  for (const auto& [kw, tag] : table) arr.push_back({{"keyword", kw}, {"tag", tag.value}});
  return arr.dump(1) + "\n";
}

struct BackendFlags {
  bool mock = false;
  std::string mock_table;
  std::string endpoint;
  std::string model;
  std::size_t max_parallel = 0;

  void add(CLI::App* cmd) {
    cmd->add_flag("--mock", mock, "Use the offline keyword backend");
    cmd->add_option("--mock-table", mock_table, "Keyword table for --mock (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--endpoint", endpoint, "Chat-completions endpoint URL");
    cmd->add_option("--llm-model", model, "Model id sent to the endpoint");
    cmd->add_option("--max-parallel", max_parallel, "Concurrent backend requests");
  }

  std::unique_ptr<CompletionBackend> make(const Taxonomy& taxonomy) const {
    if (mock)
      return std::make_unique<MockBackend>(mock_table.empty() ? default_keyword_table(taxonomy)
                                                              : load_keyword_table(mock_table));
    return std::make_unique<HttpBackend>();
  }

  void apply(PipelineConfig& config) const {
    config.backend = mock ? "mock" : "http";
    if (!endpoint.empty()) config.llm.endpoint = endpoint;
    if (!model.empty()) config.llm.model = model;
    if (max_parallel > 0) config.llm.max_parallel = max_parallel;
    if (!mock && config.llm.endpoint.empty()) throw UsageError("--endpoint is required unless --mock is given");
  }
};

/// Run record written next to every command's outputs.
class Manifest {
 public:
  Manifest(std::string command, int argc, const char* const* argv) : command_(std::move(command)) {
    for (int i = 0; i < argc; ++i) argv_.emplace_back(argv[i]);
  }
  void input(const std::string& role, const fs::path& path) {
    if (fs::is_regular_file(path)) inputs_[role] = {{"path", path.string()}, {"sha256", util::sha256_file(path)}};
  }
  void output(const std::string& role, const fs::path& path) {
    if (fs::is_regular_file(path)) outputs_[role] = {{"path", path.string()}, {"sha256", util::sha256_file(path)}};
  }
  void set(const std::string& key, ojson value) { extra_[key] = std::move(value); }

  void write(const fs::path& dir) const {
    ojson j;
    j["tool"] = "linnaeus";
    j["version"] = kToolVersion;
    j["command"] = command_;
    j["argv"] = argv_;
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    j["artifact_versions"] = {{"model", std::string(kModelHeader.substr(2))},
                              {"merged", ingest::kMergedSchemaVersion},
                              {"checkpoint", 1}};
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    util::write_file_atomic(dir / "manifest.json", j.dump(1) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  ojson inputs_ = ojson::object();
  ojson outputs_ = ojson::object();
  ojson extra_ = ojson::object();
};

ojson taxonomy_ref(const Taxonomy& t) { return {{"name", t.name()}, {"version", t.version()}}; }

std::vector<Hyperparameters> parse_grid(const std::string& text) {
  // "C:gamma,C:gamma,..."
  std::vector<Hyperparameters> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("--grid entries look like C:gamma, got '" + item + "'");
    try {
      grid.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::logic_error&) {
      throw UsageError("--grid: cannot read '" + item + "'");
    }
  }
  return grid;
}

void write_finetune(const fs::path& dir, const std::map<std::string, std::vector<FineTuneExample>>& corpora) {
  fs::create_directories(dir);
  for (const auto& [key, examples] : corpora) {
    std::string text;
    for (const auto& ex : examples) text += ojson{{"prompt", ex.prompt}, {"completion", ex.completion}}.dump() + "\n";
    util::write_file_atomic(dir / (key + ".jsonl"), text);
  }
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string asrank, peeringdb, ipinfo, eyeball, rdap_cache, rdap_endpoint = "https://rdap.org", rdap_bootstrap, out;
  bool rdap = false;
  std::size_t jobs = 4;
};

int cmd_ingest(const IngestArgs& a, Manifest& manifest, std::ostream& out, std::ostream& err) {
  fs::create_directories(a.out);
  auto asrank_in = open_input("--asrank", a.asrank);
  auto asrank = ingest::parse_asrank(asrank_in);
  ingest::Parsed<ingest::PeeringDbRecord> pdb;
  ingest::Parsed<ingest::IpinfoRecord> ipinfo;
  ingest::Parsed<ingest::EyeballRecord> eyeball;
  if (!a.peeringdb.empty()) {
    auto in = open_input("--peeringdb", a.peeringdb);
    pdb = ingest::parse_peeringdb(in);
  }
  if (!a.ipinfo.empty()) {
    auto in = open_input("--ipinfo", a.ipinfo);
    ipinfo = ingest::parse_ipinfo(in);
  }
  if (!a.eyeball.empty()) {
    auto in = open_input("--eyeball", a.eyeball);
    eyeball = ingest::parse_eyeball(in);
  }
  for (const auto* report : {&asrank.report, &pdb.report, &ipinfo.report, &eyeball.report})
    for (const auto& w : report->warnings) err << "warning: " << w << '\n';

  std::unique_ptr<ingest::RdapCache> cache;
  std::unique_ptr<ingest::RdapClient> client;
  ingest::RdapLookup lookup;
  if (a.rdap) {
    ingest::RdapOptions options;
    options.endpoint = a.rdap_endpoint;
    options.jobs = a.jobs;
    if (!a.rdap_bootstrap.empty()) options.bootstrap = ingest::RdapBootstrap::parse(nlohmann::json::parse(util::read_file(a.rdap_bootstrap)));
    cache = std::make_unique<ingest::RdapCache>(a.rdap_cache.empty() ? fs::path(a.out) / "rdap-cache" : fs::path(a.rdap_cache));
    client = std::make_unique<ingest::RdapClient>(ingest::make_http_get(), cache.get(), options);
    lookup = client->lookup();
  }

  auto merged = ingest::merge_records(asrank.records, pdb.records, ipinfo.records, eyeball.records, lookup);
  const fs::path merged_path = fs::path(a.out) / "merged.jsonl";
  {
    std::ostringstream buf;
    ingest::write_merged(buf, merged.records);
    util::write_file_atomic(merged_path, buf.str());
  }
  const auto coverage = ingest::compute_coverage(asrank.records, pdb.records, ipinfo.records, eyeball.records);
  const auto text = ingest::render_text(coverage);
  util::write_file_atomic(fs::path(a.out) / "coverage.json", ingest::to_json(coverage).dump(1) + "\n");
  util::write_file_atomic(fs::path(a.out) / "coverage.txt", text);
  out << text;
  out << "merged " << merged.report.merged << " records (" << merged.report.dropped << " dropped, RDAP "
      << merged.report.rdap_resolved << "/" << merged.report.rdap_requested << ")\n";
  if (client) {
    const auto& s = client->stats();
    out << "rdap: " << s.network_calls << " requests, " << s.cache_hits << " cache hits, " << s.failures
        << " failures, " << s.parse_errors << " malformed\n";
  }

  manifest.input("asrank", a.asrank);
  manifest.input("peeringdb", a.peeringdb);
  manifest.input("ipinfo", a.ipinfo);
  manifest.input("eyeball", a.eyeball);
  manifest.output("merged", merged_path);
  manifest.output("coverage", fs::path(a.out) / "coverage.json");
  manifest.set("config", {{"rdap", a.rdap}, {"rdap_endpoint", a.rdap_endpoint}, {"jobs", a.jobs}});
  manifest.set("report", {{"merged", merged.report.merged},
                          {"dropped", merged.report.dropped},
                          {"rdap_requested", merged.report.rdap_requested},
                          {"rdap_resolved", merged.report.rdap_resolved}});
  manifest.write(a.out);
  return kExitOk;
}

struct TrainArgs {
  std::string corpus, merged, taxonomy = "linnaeus-v1", config, out, grid;
  std::uint64_t seed = 7;
  std::size_t folds = 3, jobs = 1, few_shot = 3;
  double finetune_fraction = 0.7, threshold = 0.5;
  BackendFlags backend;
};

int cmd_train(const TrainArgs& a, const CLI::App& cmd, Manifest& manifest, std::ostream& out, std::ostream& err) {
  const auto taxonomy = resolve_taxonomy(a.taxonomy);
  PipelineConfig config;
  if (!a.config.empty()) {
    try {
      config = PipelineConfig::from_json(nlohmann::json::parse(util::read_file(a.config)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("--config: " + std::string(e.what()));
    }
  }
  if (cmd.count("--seed") || a.config.empty()) config.seed = a.seed;
  if (cmd.count("--folds")) config.folds = a.folds;
  if (cmd.count("--finetune-fraction")) config.finetune_fraction = a.finetune_fraction;
  if (cmd.count("--threshold")) config.threshold = a.threshold;
  if (cmd.count("--few-shot")) config.few_shot = a.few_shot;
  if (cmd.count("--grid")) config.grid = parse_grid(a.grid);
  a.backend.apply(config);
  config.validate();

  const auto corpus = load_corpus(a.corpus, taxonomy);
  const auto merged = load_merged(a.merged);
  auto backend = a.backend.make(taxonomy);
  const auto result = train_pipeline(corpus, merged, *backend, taxonomy, config, TrainOptions{a.jobs});

  fs::create_directories(a.out);
  const fs::path model_path = fs::path(a.out) / "model.lnm";
  result.model.save(model_path);
  util::write_file_atomic(fs::path(a.out) / "cv_report.json", result.report_json().dump(1) + "\n");
  std::string report = result.top_stacked.render_text("Top level, stacked (out-of-fold)") + "\n" +
                       result.top_llm.render_text("Top level, language model only") + "\n" +
                       result.top_svm.render_text("Top level, SVM only (out-of-fold)") + "\n" +
                       result.sub_level.render_text("Sub level (gated on out-of-fold top predictions)");
  util::write_file_atomic(fs::path(a.out) / "cv_report.txt", report);
  write_finetune(fs::path(a.out) / "finetune", result.finetune);
  out << report;
  out << "fine-tune slice " << result.finetune_rows << " rows, evaluation slice " << result.eval_rows << " rows\n";
  out << "selected C=" << result.final_selection.best.c << " gamma=" << result.final_selection.best.gamma << '\n';
  if (result.llm_failed_batches > 0)
    err << "warning: " << result.llm_failed_batches << " of " << result.llm_batches << " prompt batches stayed unlabeled\n";
  out << "model written to " << model_path.string() << '\n';

  manifest.input("corpus", a.corpus);
  manifest.input("merged", a.merged);
  manifest.input("config", a.config);
  manifest.output("model", model_path);
  manifest.output("cv_report", fs::path(a.out) / "cv_report.json");
  manifest.set("seed", config.seed);
  manifest.set("taxonomy", taxonomy_ref(taxonomy));
  manifest.set("config", config.to_json());
  manifest.set("jobs", a.jobs);
  manifest.write(a.out);
  return kExitOk;
}

struct ClassifyArgs {
  std::string model, merged, out;
  bool resume = false;
  std::optional<std::size_t> max_records;
  std::size_t checkpoint_every = 1000;
  BackendFlags backend;
};

int cmd_classify(const ClassifyArgs& a, Manifest& manifest, std::ostream& out) {
  // Backend flags override the transport settings stored with the model.
  auto model = PipelineModel::load(a.model);
  a.backend.apply(model.config);
  auto backend = a.backend.make(model.taxonomy);
  fs::create_directories(a.out);
  const fs::path predictions = fs::path(a.out) / "predictions.jsonl";
  const fs::path checkpoint = fs::path(a.out) / "checkpoint.json";

  NamespaceOptions options;
  options.checkpoint_every = a.checkpoint_every;
  options.resume = a.resume;
  options.max_records = a.max_records;
  const auto result = classify_namespace(model, a.merged, *backend, predictions, checkpoint, options);

  const auto summary = result.summary.to_json(model.taxonomy);
  if (result.complete) {
    util::write_file_atomic(fs::path(a.out) / "summary.json", summary.dump(1) + "\n");
    out << "classified " << result.summary.records << " records (" << result.processed << " in this run)\n";
  } else {
    out << "stopped after " << result.summary.records << " records; rerun with --resume to continue\n";
  }
  const auto& m = summary.at("multiplicity");
  out << "top-level tags: unlabeled " << m.at("unlabeled") << ", 1 tag " << m.at("1") << ", 2 tags " << m.at("2")
      << ", 3+ tags " << m.at("3+") << '\n';

  manifest.input("model", a.model);
  manifest.input("merged", a.merged);
  manifest.output("predictions", predictions);
  manifest.output("summary", fs::path(a.out) / "summary.json");
  manifest.set("seed", model.config.seed);
  manifest.set("taxonomy", taxonomy_ref(model.taxonomy));
  manifest.set("config", {{"resume", a.resume},
                          {"checkpoint_every", a.checkpoint_every},
                          {"max_records", a.max_records ? ojson(*a.max_records) : ojson(nullptr)},
                          {"backend", a.backend.mock ? "mock" : "http"}});
  manifest.set("complete", result.complete);
  manifest.write(a.out);
  return kExitOk;
}

/// ASN -> full tag set, from a prediction file (.jsonl) or a corpus file.
std::map<Asn, TagSet> load_tag_sets(const std::string& flag, const fs::path& path, const Taxonomy& taxonomy) {
  std::map<Asn, TagSet> out;
  if (path.extension() == ".jsonl") {
    auto in = open_input(flag, path);
    std::string line;
    while (std::getline(in, line)) {
      if (util::trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(flag + ": " + e.what());
      }
      auto p = prediction_from_json(j);
      auto tags = p.all_tags();
      for (const auto& t : tags)
        if (!taxonomy.contains(t)) throw DataError(flag + ": AS" + std::to_string(p.asn) + " carries unknown tag '" + t.value + "'");
      if (!out.emplace(p.asn, std::move(tags)).second) throw DataError(flag + ": duplicate AS" + std::to_string(p.asn));
    }
    return out;
  }
  for (const auto& row : load_corpus(path, taxonomy).rows) out.emplace(row.asn, row.tags);
  return out;
}

struct EvaluateArgs {
  std::string predictions, truth, taxonomy = "linnaeus-v1", out;
  double beta = 0.5;
};

int cmd_evaluate(const EvaluateArgs& a, Manifest* manifest, std::ostream& out) {
  const auto taxonomy = resolve_taxonomy(a.taxonomy);
  const auto predicted = load_tag_sets("--predictions", a.predictions, taxonomy);
  const auto truth = load_tag_sets("--truth", a.truth, taxonomy);
  std::vector<TagSet> p_top, t_top, p_sub, t_sub;
  for (const auto& [asn, tags] : truth) {
    auto it = predicted.find(asn);
    if (it == predicted.end()) throw DataError("--predictions has no entry for AS" + std::to_string(asn));
    p_top.push_back(taxonomy.top_projection(it->second));
    t_top.push_back(taxonomy.top_projection(tags));
    p_sub.push_back(taxonomy.sub_level_view(it->second));
    t_sub.push_back(taxonomy.sub_level_view(tags));
  }
  const auto top = compute_metrics(p_top, t_top, taxonomy.top_level(), a.beta);
  const auto sub = compute_metrics(p_sub, t_sub, taxonomy.sub_level_universe(), a.beta);
  out << top.render_text("Top level") << '\n' << sub.render_text("Sub level");
  if (manifest) {
    fs::create_directories(a.out);
    util::write_file_atomic(fs::path(a.out) / "metrics.json", ojson{{"top", top.to_json()}, {"sub", sub.to_json()}}.dump(1) + "\n");
    manifest->input("predictions", a.predictions);
    manifest->input("truth", a.truth);
    manifest->output("metrics", fs::path(a.out) / "metrics.json");
    manifest->set("taxonomy", taxonomy_ref(taxonomy));
    manifest->set("config", {{"beta", a.beta}});
    manifest->write(a.out);
  }
  return kExitOk;
}

struct ExportArgs {
  std::string corpus, merged, taxonomy = "linnaeus-v1", out;
  double fraction = 0.7;
  std::uint64_t seed = 7;
};

int cmd_export_finetune(const ExportArgs& a, Manifest& manifest, std::ostream& out) {
  if (!(a.fraction > 0.0 && a.fraction < 1.0)) throw UsageError("--fraction must lie in (0, 1)");
  const auto taxonomy = resolve_taxonomy(a.taxonomy);
  const auto corpus = load_corpus(a.corpus, taxonomy);
  const auto merged = load_merged(a.merged);
  std::map<Asn, const ingest::MergedAsRecord*> by_asn;
  for (const auto& r : merged) by_asn[r.asn] = &r;

  const std::vector<double> proportions{a.fraction, 1.0 - a.fraction};
  const auto slices = iterative_stratified_split(corpus.rows, proportions, a.seed).members(corpus.rows);
  std::vector<FewShotExample> pool;
  for (auto i : slices[0]) {
    auto it = by_asn.find(corpus.rows[i].asn);
    if (it == by_asn.end()) throw DataError("merged dataset has no record for annotated AS" + std::to_string(corpus.rows[i].asn));
    if (auto ctx = build_semantic_context(*it->second)) pool.push_back({*ctx, corpus.rows[i].tags});
  }
  std::map<std::string, std::vector<FineTuneExample>> corpora;
  corpora["top"] = export_finetune_corpus(pool, PromptLevel::top(), taxonomy);
  for (const auto& cat : taxonomy.top_level())
    if (!taxonomy.is_leaf(cat)) corpora[cat.value] = export_finetune_corpus(pool, PromptLevel::sub(cat), taxonomy);
  write_finetune(a.out, corpora);
  for (const auto& [key, examples] : corpora) {
    out << key << ": " << examples.size() << " examples\n";
    manifest.output(key, fs::path(a.out) / (key + ".jsonl"));
  }
  manifest.input("corpus", a.corpus);
  manifest.input("merged", a.merged);
  manifest.set("seed", a.seed);
  manifest.set("taxonomy", taxonomy_ref(taxonomy));
  manifest.set("config", {{"fraction", a.fraction}});
  manifest.write(a.out);
  return kExitOk;
}

struct StatsArgs {
  std::string corpus, taxonomy = "linnaeus-v1";
  bool json = false;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  const auto taxonomy = resolve_taxonomy(a.taxonomy);
  const auto stats = corpus_stats(load_corpus(a.corpus, taxonomy), taxonomy);
  out << (a.json ? stats.to_json().dump(1) + "\n" : stats.render_text());
  return kExitOk;
}

struct SynthArgs {
  std::string out, taxonomy = "linnaeus-v1";
  std::size_t per_category = 30;
  double co_label = 0.1;
  std::uint64_t seed = 7;
  Asn first_asn = 4200000000;
};

int cmd_synth(const SynthArgs& a, Manifest& manifest, std::ostream& out) {
  if (!(a.co_label >= 0.0 && a.co_label <= 1.0)) throw UsageError("--co-label must lie in [0, 1]");
  const auto taxonomy = resolve_taxonomy(a.taxonomy);
  auto spec = default_synthetic_spec(taxonomy, a.per_category, a.co_label, a.seed);
  spec.first_asn = a.first_asn;
  const auto data = generate_synthetic(spec, taxonomy);
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  save_corpus(dir / "corpus.csv", data.corpus, taxonomy);
  std::ostringstream merged;
  ingest::write_merged(merged, data.merged);
  util::write_file_atomic(dir / "merged.jsonl", merged.str());
  util::write_file_atomic(dir / "mock_table.json", keyword_table_json(data.mock_table));
  out << "wrote " << data.corpus.rows.size() << " synthetic ASes to " << a.out << '\n';
  manifest.output("corpus", dir / "corpus.csv");
  manifest.output("merged", dir / "merged.jsonl");
  manifest.output("mock_table", dir / "mock_table.json");
  manifest.set("seed", a.seed);
  manifest.set("taxonomy", taxonomy_ref(taxonomy));
  manifest.set("config", {{"per_category", a.per_category}, {"co_label", a.co_label}, {"first_asn", a.first_asn}});
  manifest.write(a.out);
  return kExitOk;
}

int run_app(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-label classification of Internet autonomous systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Merge data snapshots into one record per ASN");
  ingest->add_option("--asrank", ingest_args.asrank, "AS-Rank export (JSON lines)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--peeringdb", ingest_args.peeringdb, "PeeringDB dump (JSON)")->check(CLI::ExistingFile);
  ingest->add_option("--ipinfo", ingest_args.ipinfo, "IPinfo ASN CSV")->check(CLI::ExistingFile);
  ingest->add_option("--eyeball", ingest_args.eyeball, "APNIC eyeball CSV")->check(CLI::ExistingFile);
  ingest->add_flag("--rdap", ingest_args.rdap, "Query RDAP for ASNs still lacking org metadata");
  ingest->add_option("--rdap-cache", ingest_args.rdap_cache, "RDAP response cache directory");
  ingest->add_option("--rdap-endpoint", ingest_args.rdap_endpoint, "RDAP base URL")->capture_default_str();
  ingest->add_option("--rdap-bootstrap", ingest_args.rdap_bootstrap, "IANA RDAP bootstrap file for ASNs")
      ->check(CLI::ExistingFile);
  ingest->add_option("--jobs", ingest_args.jobs, "Concurrent RDAP requests")->capture_default_str();
  ingest->add_option("--out", ingest_args.out, "Output directory")->required();

  TrainArgs train_args;
  train_args.jobs = util::default_jobs();
  auto* train = app.add_subcommand("train", "Train the hybrid top-level model and record sub-level prompts");
  train->add_option("--corpus", train_args.corpus, "Annotated corpus (CSV or JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--merged", train_args.merged, "Merged dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  train->add_option("--taxonomy", train_args.taxonomy, "Taxonomy file or built-in name")->capture_default_str();
  train->add_option("--config", train_args.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--seed", train_args.seed, "Random seed")->capture_default_str();
  train->add_option("--folds", train_args.folds, "Cross-validation folds")->capture_default_str();
  train->add_option("--finetune-fraction", train_args.finetune_fraction, "Share of the corpus held for fine-tuning")
      ->capture_default_str();
  train->add_option("--threshold", train_args.threshold, "Top-level decision threshold")->capture_default_str();
  train->add_option("--few-shot", train_args.few_shot, "Exemplars per prompt")->capture_default_str();
  train->add_option("--grid", train_args.grid, "SVM grid as C:gamma,C:gamma,...");
  train->add_option("--jobs", train_args.jobs, "Worker threads");
  train->add_option("--out", train_args.out, "Output directory")->required();
  train_args.backend.add(train);

  ClassifyArgs classify_args;
  auto* classify_cmd = app.add_subcommand("classify", "Classify every AS of a merged dataset");
  classify_cmd->add_option("--model", classify_args.model, "Trained model artifact")->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--merged", classify_args.merged, "Merged dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--out", classify_args.out, "Output directory")->required();
  classify_cmd->add_flag("--resume", classify_args.resume, "Continue from the checkpoint in the output directory");
  classify_cmd->add_option("--max-records", classify_args.max_records, "Stop after this many records");
  classify_cmd->add_option("--checkpoint-every", classify_args.checkpoint_every, "Records per checkpoint")
      ->capture_default_str();
  classify_args.backend.add(classify_cmd);

  EvaluateArgs evaluate_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against annotated tags");
  evaluate->add_option("--predictions", evaluate_args.predictions, "Predictions (.jsonl) or a corpus file")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--truth", evaluate_args.truth, "Annotated corpus")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--taxonomy", evaluate_args.taxonomy, "Taxonomy file or built-in name")->capture_default_str();
  evaluate->add_option("--beta", evaluate_args.beta, "F-beta weight")->capture_default_str();
  evaluate->add_option("--out", evaluate_args.out, "Output directory for metrics.json");

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export-finetune", "Write per-level fine-tuning corpora");
  export_cmd->add_option("--corpus", export_args.corpus, "Annotated corpus")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--merged", export_args.merged, "Merged dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--taxonomy", export_args.taxonomy, "Taxonomy file or built-in name")->capture_default_str();
  export_cmd->add_option("--fraction", export_args.fraction, "Share of the corpus exported")->capture_default_str();
  export_cmd->add_option("--seed", export_args.seed, "Random seed")->capture_default_str();
  export_cmd->add_option("--out", export_args.out, "Output directory")->required();

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "Per-category counts of an annotated corpus");
  stats->add_option("--corpus", stats_args.corpus, "Annotated corpus")->required()->check(CLI::ExistingFile);
  stats->add_option("--taxonomy", stats_args.taxonomy, "Taxonomy file or built-in name")->capture_default_str();
  stats->add_flag("--json", stats_args.json, "Print JSON instead of a table");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and merged dataset");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--taxonomy", synth_args.taxonomy, "Taxonomy file or built-in name")->capture_default_str();
  synth->add_option("--per-category", synth_args.per_category, "ASes per top-level category")->capture_default_str();
  synth->add_option("--co-label", synth_args.co_label, "Share of each category also carrying the next one")
      ->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Random seed")->capture_default_str();
  synth->add_option("--first-asn", synth_args.first_asn, "First ASN assigned")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) {
      Manifest m("ingest", argc, argv);
      return cmd_ingest(ingest_args, m, out, err);
    }
    if (*train) {
      Manifest m("train", argc, argv);
      return cmd_train(train_args, *train, m, out, err);
    }
    if (*classify_cmd) {
      Manifest m("classify", argc, argv);
      return cmd_classify(classify_args, m, out);
    }
    if (*evaluate) {
      Manifest m("evaluate", argc, argv);
      return cmd_evaluate(evaluate_args, evaluate_args.out.empty() ? nullptr : &m, out);
    }
    if (*export_cmd) {
      Manifest m("export-finetune", argc, argv);
      return cmd_export_finetune(export_args, m, out);
    }
    if (*stats) return cmd_stats(stats_args, out);
    if (*synth) {
      Manifest m("synth", argc, argv);
      return cmd_synth(synth_args, m, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return run_app(argc, argv, out, err);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace linnaeus::cli
