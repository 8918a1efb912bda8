// Runs the release acceptance checks and prints one PASS/FAIL line per criterion.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "linnaeus/corpus.hpp"
#include "linnaeus/error.hpp"
#include "linnaeus/eval.hpp"
#include "linnaeus/ingestion.hpp"
#include "linnaeus/llm.hpp"
#include "linnaeus/pipeline.hpp"
#include "linnaeus/rdap.hpp"
#include "linnaeus/svm.hpp"
#include "linnaeus/taxonomy.hpp"
#include "linnaeus/util.hpp"
#include "../support/cli_call.hpp"
#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace linnaeus;

namespace {

/// Collects failed conditions for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

const Taxonomy& tax() { return Taxonomy::default_taxonomy(); }

void taxonomy_fidelity(Check& c) {
  auto tax = Taxonomy::builtin("linnaeus-v1");
  c.expect(tax.top_level().size() == 18, "top-level count " + std::to_string(tax.top_level().size()));
  c.expect(tax.sub_level().size() == 38, "sub-level count " + std::to_string(tax.sub_level().size()));
  auto orphan = tax.validate_tagset(make_tagset({"government.executive"}));
  c.expect(!orphan.ok() && orphan.violations[0].rule == Violation::Rule::parent_missing,
           "orphan executive tag accepted");
  c.expect(tax.validate_tagset(make_tagset({"government", "government.executive", "government.national"})).ok(),
           "government axes example rejected");
  c.notes << "18 top, 38 sub";
}

void stratification(Check& c) {
  std::vector<LabeledExample> ex;
  Asn asn = 1;
  const std::vector<std::pair<std::string, int>> classes{
      {"transit.domestic", 24}, {"transit.global", 42}, {"transit.regional", 10}};
  for (const auto& [tag, n] : classes)
    for (int i = 0; i < n; ++i) ex.push_back({asn++, make_tagset({tag, "transit"})});
  auto shares = [&](const std::map<Asn, std::size_t>& fold) {
    std::vector<double> out;
    for (const auto& [tag, n] : classes) {
      double val = 0;
      for (const auto& e : ex)
        if (e.tags.contains(TagId(tag))) val += fold.at(e.asn) == 1;
      out.push_back(val / n);
    }
    return out;
  };
  auto in_band = [](const std::vector<double>& s) {
    return std::all_of(s.begin(), s.end(), [](double v) { return v >= 0.25 && v <= 0.35; });
  };
  const double props[] = {0.7, 0.3};
  int strat_out = 0, random_out = 0;
  std::vector<double> first;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto fa = iterative_stratified_split(ex, props, seed);
    auto s = shares(fa.assignment);
    if (seed == 0) first = s;
    strat_out += !in_band(s);
    util::Rng rng(seed + 1000);
    std::vector<std::size_t> idx(ex.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx.begin(), idx.end());
    std::map<Asn, std::size_t> rnd;
    const auto val = std::size_t(std::llround(0.3 * double(ex.size())));
    for (std::size_t i = 0; i < idx.size(); ++i) rnd[ex[idx[i]].asn] = i < val ? 1 : 0;
    random_out += !in_band(shares(rnd));
  }
  c.expect(strat_out == 0, std::to_string(strat_out) + " stratified splits left the band");
  c.expect(random_out > strat_out, "random split not worse than stratified");
  c.notes << std::fixed << std::setprecision(2) << "seed 0 shares " << 100 * first[0] << "/" << 100 * first[1] << "/"
          << 100 * first[2] << "%, out of band: stratified " << strat_out << "/100, random " << random_out << "/100";
}

void metric_oracle(Check& c) {
  std::vector<TagId> ab{TagId("a"), TagId("b")};
  std::vector<TagSet> truth{make_tagset({"a"}), make_tagset({"b"}), make_tagset({"a", "b"})};
  std::vector<TagSet> pred{make_tagset({"a"}), make_tagset({"a"}), make_tagset({"a", "b"})};
  auto w = compute_metrics(pred, truth, ab);
  c.expect(std::abs(w.subset_accuracy - 2.0 / 3) <= 1e-12, "worked example subset accuracy");
  c.expect(std::abs(w.macro_precision - 5.0 / 6) <= 1e-12, "worked example macro precision");
  c.expect(std::abs(w.macro_recall - 3.0 / 4) <= 1e-12, "worked example macro recall");

  std::vector<TagId> u(tax().top_level().begin(), tax().top_level().end());
  std::mt19937_64 rng(2025);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    const double density = 0.02 + 0.3 * double(rng() % 100) / 100.0;
    auto t = oracle::random_tagsets(rng, u, n, density);
    auto p = oracle::random_tagsets(rng, u, n, density);
    auto got = compute_metrics(p, t, u);
    auto want = oracle::brute_force_metrics(p, t, u);
    for (double d : {got.macro_precision - want.macro_precision, got.macro_recall - want.macro_recall,
                     got.macro_f1 - want.macro_f1, got.avg_per_label_accuracy - want.avg_accuracy,
                     got.subset_accuracy - want.subset_accuracy})
      worst = std::max(worst, std::abs(d));
  }
  c.expect(worst <= 1e-12, "oracle disagreement " + std::to_string(worst));
  c.notes << "200 instances, max deviation " << worst;
}

void svm_numerics(Check& c) {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> g(0, 2);
  double min_eig = 1;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng() % 6;
    const double gamma = std::exp(g(rng));
    std::vector<std::vector<double>> pts(20, std::vector<double>(d));
    for (auto& p : pts)
      for (auto& v : p) v = g(rng);
    Eigen::MatrixXd k(20, 20);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j) k(i, j) = rbf_kernel(pts[i], pts[j], gamma);
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff());
  }
  c.expect(min_eig >= -1e-8, "kernel eigenvalue " + std::to_string(min_eig));

  double worst_sum = 0;
  bool box = true;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x;
    std::vector<int> y;
    if (trial % 2)
      oracle::rings(rng, 50, x, y);
    else
      oracle::blobs(rng, 40, 0.5, x, y);
    const double cval = trial % 3 ? 10.0 : 0.5;
    auto sol = solve_dual(x, y, Kernel{KernelKind::rbf, 0.5}, cval);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      box = box && sol.alpha[i] >= 0 && sol.alpha[i] <= cval;
      s += sol.alpha[i] * y[i];
    }
    worst_sum = std::max(worst_sum, std::abs(s));
  }
  c.expect(box, "alpha outside [0, C]");
  c.expect(worst_sum <= 1e-6, "sum alpha*y " + std::to_string(worst_sum));

  Matrix bx, rx, rtest;
  std::vector<int> by, ry, rtesty;
  oracle::blobs(rng, 40, 2.0, bx, by);
  auto blob_model = train_binary(bx, by, Kernel{KernelKind::rbf, 0.5}, 10.0);
  std::size_t blob_ok = 0;
  for (std::size_t i = 0; i < bx.rows(); ++i) blob_ok += (blob_model.decision(bx.row(i)) > 0) == (by[i] > 0);
  c.expect(blob_ok == bx.rows(), "blob training accuracy below 1");

  oracle::rings(rng, 100, rx, ry);
  oracle::rings(rng, 100, rtest, rtesty);
  auto ring_model = train_binary(rx, ry, Kernel{KernelKind::rbf, 1.0}, 10.0);
  std::size_t ring_ok = 0;
  for (std::size_t i = 0; i < rtest.rows(); ++i) ring_ok += (ring_model.decision(rtest.row(i)) > 0) == (rtesty[i] > 0);
  const double ring_acc = double(ring_ok) / double(rtest.rows());
  c.expect(ring_acc >= 0.95, "ring accuracy " + std::to_string(ring_acc));

  double worst_mean = 0, worst_std = 0;
  bool observed_kept = true;
  std::bernoulli_distribution hole(0.2);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m(5 + rng() % 60, 1 + rng() % 8);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t col = 0; col < m.cols(); ++col) m(r, col) = hole(rng) ? kMissing : 3 + 5 * g(rng);
    auto filled = impute(fit_imputer(m, 5), m);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t col = 0; col < m.cols(); ++col)
        if (!std::isnan(m(r, col)) && filled(r, col) != m(r, col)) observed_kept = false;
    auto model = fit_scaler(filled);
    auto s = scale(model, filled);
    for (std::size_t col = 0; col < s.cols(); ++col) {
      if (model.constant[col]) continue;
      double mean = 0, var = 0;
      for (std::size_t r = 0; r < s.rows(); ++r) mean += s(r, col);
      mean /= double(s.rows());
      for (std::size_t r = 0; r < s.rows(); ++r) var += (s(r, col) - mean) * (s(r, col) - mean);
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_std = std::max(worst_std, std::abs(std::sqrt(var / double(s.rows())) - 1));
    }
  }
  c.expect(observed_kept, "imputation altered an observed cell");
  c.expect(worst_mean < 1e-9, "scaled mean " + std::to_string(worst_mean));
  c.expect(worst_std < 1e-9, "scaled std deviation " + std::to_string(worst_std));
  c.notes << std::setprecision(3) << "min eig " << min_eig << ", |sum ay| " << worst_sum << ", rings " << ring_acc;
}

void end_to_end(Check& c) {
  auto data = generate_synthetic(default_synthetic_spec(tax(), 30, 0.1, 7), tax());
  MockBackend mock(data.mock_table);
  PipelineConfig cfg;
  cfg.seed = 7;
  TrainOptions opt;
  opt.jobs = util::default_jobs();
  auto trained = train_pipeline(data.corpus, data.merged, mock, tax(), cfg, opt);

  auto spec = default_synthetic_spec(tax(), 30, 0.1, 8);
  spec.first_asn = 4210000000;
  auto held = generate_synthetic(spec, tax());
  auto preds = classify(trained.model, held.merged, mock);

  std::map<Asn, const HierarchicalPrediction*> by_asn;
  std::size_t consistent = 0, gated = 0;
  for (const auto& p : preds) {
    by_asn[p.asn] = &p;
    auto admissible = tax().admissible_subtags(p.top_tags);
    consistent += std::includes(admissible.begin(), admissible.end(), p.sub_tags.begin(), p.sub_tags.end());
    gated += !p.top_unlabeled || p.sub_tags.empty();
  }
  std::vector<TagSet> top_pred, top_truth, sub_pred, sub_truth;
  for (const auto& row : held.corpus.rows) {
    const auto* p = by_asn.at(row.asn);
    top_pred.push_back(p->top_tags);
    top_truth.push_back(tax().top_projection(row.tags));
    sub_pred.push_back(tax().sub_level_view(p->all_tags()));
    sub_truth.push_back(tax().sub_level_view(row.tags));
  }
  const auto top_u = tax().top_level();
  const auto sub_u = tax().sub_level_universe();
  const double top_f1 = compute_metrics(top_pred, top_truth, top_u).macro_f1;
  const double sub_f1 = compute_metrics(sub_pred, sub_truth, sub_u).macro_f1;
  c.expect(top_f1 >= 0.90, "top macro F1 " + std::to_string(top_f1));
  c.expect(sub_f1 >= 0.85, "sub macro F1 " + std::to_string(sub_f1));
  c.expect(consistent == preds.size(), "inconsistent predictions");
  c.expect(gated == preds.size(), "sub tags on top-unlabeled ASes");
  c.notes << std::setprecision(3) << "held-out top F1 " << top_f1 << ", sub F1 " << sub_f1 << ", consistency "
          << consistent << "/" << preds.size();
}

void determinism(Check& c) {
  const auto dir = oracle::temp_dir("acceptance-det");
  const auto d = dir.string();
  auto ok = [&](const std::vector<std::string>& args) {
    auto r = cli_call::run(args);
    c.expect(r.code == 0, args[0] + " exited " + std::to_string(r.code) + ": " + r.err);
    return r.code == 0;
  };
  if (!ok({"synth", "--out", d + "/data", "--seed", "7"})) return;
  for (auto name : {"a", "b"})
    if (!ok({"train", "--corpus", d + "/data/corpus.csv", "--merged", d + "/data/merged.jsonl", "--mock", "--seed",
             "7", "--out", d + "/" + name}))
      return;
  const auto model_a = util::read_file(dir / "a" / "model.lnm");
  c.expect(model_a == util::read_file(dir / "b" / "model.lnm"), "model artifacts differ");

  const std::vector<std::string> base{"classify", "--model", d + "/a/model.lnm", "--merged", d + "/data/merged.jsonl",
                                      "--mock", "--checkpoint-every", "100"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
  };
  if (!ok(with({"--out", d + "/full"}))) return;
  if (!ok(with({"--out", d + "/cut", "--max-records", "250"}))) return;
  const bool partial = !std::filesystem::exists(dir / "cut" / "summary.json");
  c.expect(partial, "interrupted run reported completion");
  if (!ok(with({"--out", d + "/cut", "--resume"}))) return;
  const auto full = util::read_file(dir / "full" / "predictions.jsonl");
  c.expect(full == util::read_file(dir / "cut" / "predictions.jsonl"), "resumed predictions differ");
  c.expect(util::read_file(dir / "full" / "summary.json") == util::read_file(dir / "cut" / "summary.json"),
           "resumed summary differs");
  c.notes << "artifact sha256 " << util::sha256_hex(model_a).substr(0, 12) << ", predictions "
          << std::count(full.begin(), full.end(), '\n') << " lines";
  std::filesystem::remove_all(dir);
}

class Garbage : public CompletionBackend {
 public:
  std::string complete(const std::string&, const BackendConfig&) override {
    ++calls;
    return "{\"asn\": oops";
  }
  std::string name() const override { return "garbage"; }
  std::atomic<int> calls{0};
};

void wire_formats(Check& c) {
  std::set<TagId> admissible;
  for (const auto& n : tax().nodes()) admissible.insert(n.id);
  std::mt19937_64 rng(500);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = oracle::random_valid_tagset(rng, tax());
    LlmPrediction p;
    p.asn = Asn(64500 + trial);
    for (const auto& t : s) p.confidences[t] = 1.0;
    const Asn asn[] = {p.asn};
    const auto back = parse_response(render_response(std::span(&p, 1), &tax()), asn, admissible).predictions.at(0);
    mismatches += back.confidences != p.confidences;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " tag sets changed in the round trip");

  auto data = generate_synthetic(default_synthetic_spec(tax(), 10, 0.1, 4), tax());
  const auto dir = oracle::temp_dir("acceptance-corpus");
  for (auto name : {"corpus.csv", "corpus.json"}) {
    save_corpus(dir / name, data.corpus, tax());
    c.expect(load_corpus(dir / name, tax()) == data.corpus, std::string("corpus round trip via ") + name);
  }
  std::filesystem::remove_all(dir);

  Garbage garbage;
  std::vector<SemanticContext> items;
  for (const auto& r : data.merged)
    if (auto ctx = build_semantic_context(r)) items.push_back(*ctx);
  items.resize(25);
  LlmRunStats stats;
  BackendConfig cfg;
  auto preds = predict_tags(garbage, PromptLevel::top(), tax(), items, {}, cfg, &stats);
  c.expect(stats.batches == 3 && garbage.calls == 6, "expected two attempts for each of 3 batches");
  c.expect(stats.retries == 3, "retry count " + std::to_string(stats.retries.load()));
  c.expect(stats.failed_batches == 3 && stats.unlabeled_items == 25, "unlabeled fallback counters");
  c.expect(std::all_of(preds.begin(), preds.end(), [](const auto& p) { return p.confidences.empty() && p.failed; }),
           "fallback predictions carry labels");
  c.notes << "500 tag sets, retries " << stats.retries << ", unlabeled " << stats.unlabeled_items;
}

void ingestion(Check& c) {
  using namespace linnaeus::ingest;
  auto s = fixtures::load_sources();
  auto cov = compute_coverage(s.asrank.records, s.peeringdb.records, s.ipinfo.records, s.eyeball.records);
  const std::vector<std::pair<std::string, std::size_t>> want_pdb{
      {"Total network records", 32}, {"Website", 27},           {"Network-type", 23},      {"Geo-scope", 31},
      {"Peering-ratio", 31},         {"Facility (netfac)", 13}, {"IXP LAN (netixlan)", 16}};
  const std::vector<std::pair<std::string, std::size_t>> want_other{{"IPinfo total ASNs", 83},
                                                                    {"Website field present", 77},
                                                                    {"CAIDA AS-Rank ASNs", 119},
                                                                    {"Cones inferred", 77},
                                                                    {"AS-Pop total records", 31}};
  std::vector<std::pair<std::string, std::size_t>> got_pdb, got_other;
  for (const auto& r : cov.peeringdb) got_pdb.emplace_back(r.metric, r.count);
  for (const auto& r : cov.other) got_other.emplace_back(r.metric, r.count);
  c.expect(got_pdb == want_pdb, "PeeringDB coverage rows");
  c.expect(got_other == want_other, "other-source coverage rows");

  const auto cache_dir = oracle::temp_dir("acceptance-rdap");
  RdapCache cache(cache_dir);
  RdapOptions opt;
  opt.backoff = std::chrono::milliseconds(0);
  RdapClient client(fixtures::fixture_http(), &cache, opt);
  auto merged = merge_records(s.asrank.records, s.peeringdb.records, s.ipinfo.records, s.eyeball.records,
                              client.lookup());
  std::map<Asn, MergedAsRecord> by;
  for (const auto& r : merged.records) by[r.asn] = r;
  auto field = [&](Asn asn, Sourced MergedAsRecord::*f, const std::optional<std::string>& value, Source src,
                   const std::string& label) {
    const auto& got = by.at(asn).*f;
    c.expect(got.value == value && got.source == src, "AS" + std::to_string(asn) + " " + label);
  };
  field(64500, &MergedAsRecord::website, "ipinfo64500.example", Source::ipinfo, "website from IPinfo");
  field(64500, &MergedAsRecord::as_name, "IPINFO-NET-64500", Source::ipinfo, "name from IPinfo");
  field(64500, &MergedAsRecord::org_name, "PeeringDB Org 64500", Source::peeringdb, "org from PeeringDB");
  field(64501, &MergedAsRecord::website, "https://pdb64501.example", Source::peeringdb, "website from PeeringDB");
  field(64505, &MergedAsRecord::website, std::nullopt, Source::absent, "website absent");
  field(64531, &MergedAsRecord::org_name, "ORG-HANDLE-ONLY", Source::rdap, "org from RDAP handle");
  field(64600, &MergedAsRecord::as_name, "RDAP-NET-64600", Source::rdap, "name from RDAP");
  field(64600, &MergedAsRecord::org_name, "Registry Listed Org", Source::rdap, "org from RDAP");
  field(64610, &MergedAsRecord::as_name, "RANK-NET-64610", Source::asrank, "name from AS-Rank");
  c.expect(by.at(64500).ixp_port_mbps_total == 20000u, "IXP port capacity sum");
  c.expect(merged.report.dropped == 1 && merged.records.size() == 119, "dropped / merged counts");
  std::filesystem::remove_all(cache_dir);
  c.notes << "coverage rows match, " << merged.report.rdap_resolved << " RDAP records resolved";
}

struct Criterion {
  int number;
  std::string name;
  double limit_seconds;
  std::function<void(Check&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "taxonomy fidelity", 1, taxonomy_fidelity},
      {2, "stratification regression", 5, stratification},
      {3, "metric oracle", 10, metric_oracle},
      {4, "SVM numerics", 60, svm_numerics},
      {5, "end-to-end offline pipeline", 300, end_to_end},
      {6, "determinism and resumability", 120, determinism},
      {7, "wire-format round trips", 10, wire_formats},
      {8, "ingestion fixtures", 10, ingestion},
  };
  int failed = 0;
  for (const auto& crit : criteria) {
    Check c;
    const auto start = std::chrono::steady_clock::now();
    try {
      crit.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= crit.limit_seconds)
      c.failures.push_back("runtime " + std::to_string(secs) + " s over " + std::to_string(crit.limit_seconds) + " s");
    const bool pass = c.failures.empty();
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << crit.number << " (" << crit.name << ", "
              << std::fixed << std::setprecision(2) << secs << " s): ";
    if (pass) {
      std::cout << c.notes.str();
    } else {
      for (std::size_t i = 0; i < c.failures.size(); ++i) std::cout << (i ? "; " : "") << c.failures[i];
    }
    std::cout << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
