#include "linnaeus/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus {

std::vector<std::vector<std::size_t>> FoldAssignment::members(std::span<const LabeledExample> examples) const {
  std::vector<std::vector<std::size_t>> out(n_folds);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto it = assignment.find(examples[i].asn);
    if (it == assignment.end()) throw DataError("AS" + std::to_string(examples[i].asn) + " has no fold");
    out.at(it->second).push_back(i);
  }
  return out;
}

namespace {

constexpr double kTieEps = 1e-9;

/// Picks among folds: max of `primary`, then max capacity, then random. Exhausted folds
/// are skipped while any fold still has capacity.
std::size_t choose_fold(const std::vector<double>& primary, const std::vector<double>& capacity, util::Rng& rng) {
  const std::size_t k = capacity.size();
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < k; ++j)
    if (capacity[j] > kTieEps) pool.push_back(j);
  if (pool.empty()) {
    pool.resize(k);
    std::iota(pool.begin(), pool.end(), 0);
  }
  auto narrow = [&pool](const std::vector<double>& score) {
    double best = -std::numeric_limits<double>::infinity();
    for (auto j : pool) best = std::max(best, score[j]);
    std::vector<std::size_t> kept;
    for (auto j : pool)
      if (score[j] >= best - kTieEps) kept.push_back(j);
    pool = std::move(kept);
  };
  if (!primary.empty()) narrow(primary);
  narrow(capacity);
  return pool.size() == 1 ? pool.front() : pool[rng.below(pool.size())];
}

}  // namespace

FoldAssignment iterative_stratified_split(std::span<const LabeledExample> examples, std::span<const double> proportions,
                                          std::uint64_t seed) {
  if (examples.empty()) throw DataError("stratified split of an empty dataset");
  if (proportions.size() < 2) throw UsageError("stratified split needs at least two folds");
  double total = 0;
  for (double p : proportions) {
    if (!(p > 0) || !std::isfinite(p)) throw UsageError("fold proportions must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("fold proportions must sum to 1");

  const std::size_t n = examples.size();
  const std::size_t k = proportions.size();

  FoldAssignment out;
  out.n_folds = k;
  out.proportions.assign(proportions.begin(), proportions.end());

  std::set<Asn> seen;
  for (const auto& e : examples)
    if (!seen.insert(e.asn).second) throw DataError("duplicate AS" + std::to_string(e.asn) + " in dataset");

  std::vector<TagId> labels;
  {
    std::set<TagId> all;
    for (const auto& e : examples) all.insert(e.tags.begin(), e.tags.end());
    labels.assign(all.begin(), all.end());
  }
  std::map<TagId, std::size_t> label_index;
  for (std::size_t l = 0; l < labels.size(); ++l) label_index[labels[l]] = l;

  std::vector<std::vector<std::size_t>> example_labels(n);
  std::vector<std::size_t> remaining(labels.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& t : examples[i].tags) {
      auto l = label_index.at(t);
      example_labels[i].push_back(l);
      ++remaining[l];
    }
  }

  std::vector<double> capacity(k);
  std::vector<std::vector<double>> demand(labels.size(), std::vector<double>(k));
  for (std::size_t j = 0; j < k; ++j) {
    capacity[j] = static_cast<double>(n) * proportions[j];
    for (std::size_t l = 0; l < labels.size(); ++l) demand[l][j] = static_cast<double>(remaining[l]) * proportions[j];
  }

  util::Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());

  std::vector<bool> assigned(n, false);
  auto assign = [&](std::size_t i, std::size_t fold) {
    assigned[i] = true;
    out.assignment[examples[i].asn] = fold;
    capacity[fold] -= 1.0;
    for (auto l : example_labels[i]) {
      demand[l][fold] -= 1.0;
      --remaining[l];
    }
  };

  while (true) {
    std::size_t rarest = labels.size();
    for (std::size_t l = 0; l < labels.size(); ++l)
      if (remaining[l] > 0 && (rarest == labels.size() || remaining[l] < remaining[rarest])) rarest = l;
    if (rarest == labels.size()) break;
    for (auto i : order) {
      if (assigned[i]) continue;
      const auto& ls = example_labels[i];
      if (std::find(ls.begin(), ls.end(), rarest) == ls.end()) continue;
      assign(i, choose_fold(demand[rarest], capacity, rng));
    }
  }
  for (auto i : order)
    if (!assigned[i]) assign(i, choose_fold({}, capacity, rng));
  return out;
}

FoldAssignment kfold_iterative(std::span<const LabeledExample> examples, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("k-fold needs k >= 2");
  if (k > examples.size())
    throw DataError("cannot build " + std::to_string(k) + " folds from " + std::to_string(examples.size()) + " examples");
  std::vector<double> proportions(k, 1.0 / static_cast<double>(k));
  // Normalize the last share so the proportions sum to exactly 1 in floating point.
  proportions.back() = 1.0 - std::accumulate(proportions.begin(), proportions.end() - 1, 0.0);
  auto folds = iterative_stratified_split(examples, proportions, seed);
  for (const auto& m : folds.members(examples))
    if (m.empty()) throw InternalError("k-fold produced an empty fold");
  return folds;
}

std::vector<CvSplit> cv_splits(std::span<const LabeledExample> examples, const FoldAssignment& folds) {
  auto members = folds.members(examples);
  std::vector<CvSplit> out(folds.n_folds);
  for (std::size_t f = 0; f < folds.n_folds; ++f) {
    out[f].test = members[f];
    for (std::size_t g = 0; g < folds.n_folds; ++g)
      if (g != f) out[f].train.insert(out[f].train.end(), members[g].begin(), members[g].end());
    std::sort(out[f].train.begin(), out[f].train.end());
  }
  return out;
}

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

MetricsReport compute_metrics(std::span<const TagSet> predictions, std::span<const TagSet> truth,
                              std::span<const TagId> universe, double beta) {
  if (predictions.size() != truth.size())
    throw DataError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(truth.size()) + " truth rows");
  const std::set<TagId> known(universe.begin(), universe.end());
  auto check = [&](const TagSet& s) {
    for (const auto& t : s)
      if (!known.contains(t)) throw DataError("metrics: tag '" + t.value + "' outside the evaluated universe");
  };

  MetricsReport rep;
  rep.samples = truth.size();
  rep.beta = beta;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    check(predictions[i]);
    check(truth[i]);
    if (predictions[i] == truth[i]) ++exact;
  }
  const double n = static_cast<double>(truth.size());
  rep.subset_accuracy = truth.empty() ? 0.0 : static_cast<double>(exact) / n;

  double sum_p = 0, sum_r = 0, sum_f1 = 0, sum_fb = 0, sum_acc = 0;
  std::size_t active = 0, supported = 0;
  for (const auto& tag : universe) {
    TagMetrics m;
    m.tag = tag;
    std::size_t tn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = predictions[i].contains(tag);
      const bool t = truth[i].contains(tag);
      m.support += t;
      m.predicted += p;
      m.true_positives += p && t;
      tn += !p && !t;
    }
    m.precision = m.predicted ? static_cast<double>(m.true_positives) / static_cast<double>(m.predicted) : 0.0;
    m.recall = m.support ? static_cast<double>(m.true_positives) / static_cast<double>(m.support) : 0.0;
    m.accuracy = truth.empty() ? 0.0 : static_cast<double>(m.true_positives + tn) / n;
    m.f1 = f_beta(m.precision, m.recall, 1.0);
    m.f_beta = f_beta(m.precision, m.recall, beta);

    if (m.support == 0 && m.predicted == 0) {
      rep.inactive_tags.push_back(tag);
    } else {
      ++active;
      sum_p += m.precision;
      sum_acc += m.accuracy;
      if (m.predicted == 0) rep.zero_prediction_tags.push_back(tag);
      if (m.support == 0) {
        rep.unsupported_tags.push_back(tag);
      } else {
        ++supported;
        sum_r += m.recall;
        sum_f1 += m.f1;
        sum_fb += m.f_beta;
      }
    }
    rep.per_tag.push_back(std::move(m));
  }
  if (active) {
    rep.macro_precision = sum_p / static_cast<double>(active);
    rep.avg_per_label_accuracy = sum_acc / static_cast<double>(active);
  }
  if (supported) {
    rep.macro_recall = sum_r / static_cast<double>(supported);
    rep.macro_f1 = sum_f1 / static_cast<double>(supported);
    rep.macro_f_beta = sum_fb / static_cast<double>(supported);
  }
  return rep;
}

namespace {

nlohmann::ordered_json tag_list(const std::vector<TagId>& tags) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : tags) arr.push_back(t.value);
  return arr;
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = samples;
  j["beta"] = beta;
  auto& tags = j["per_tag"] = nlohmann::ordered_json::array();
  for (const auto& m : per_tag) {
    nlohmann::ordered_json t;
    t["tag"] = m.tag.value;
    t["support"] = m.support;
    t["predicted"] = m.predicted;
    t["true_positives"] = m.true_positives;
    t["precision"] = m.precision;
    t["recall"] = m.recall;
    t["accuracy"] = m.accuracy;
    t["f1"] = m.f1;
    t["f_beta"] = m.f_beta;
    tags.push_back(std::move(t));
  }
  j["macro_precision"] = macro_precision;
  j["macro_recall"] = macro_recall;
  j["macro_f1"] = macro_f1;
  j["macro_f_beta"] = macro_f_beta;
  j["avg_per_label_accuracy"] = avg_per_label_accuracy;
  j["subset_accuracy"] = subset_accuracy;
  j["zero_prediction_tags"] = tag_list(zero_prediction_tags);
  j["unsupported_tags"] = tag_list(unsupported_tags);
  j["inactive_tags"] = tag_list(inactive_tags);
  return j;
}

std::string MetricsReport::render_text(const std::string& title) const {
  std::size_t width = 8;
  for (const auto& m : per_tag) width = std::max(width, m.tag.value.size());
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  if (!title.empty()) out << title << '\n';
  out << std::left << std::setw(static_cast<int>(width)) << "Tag" << std::right << std::setw(8) << "Prec."
      << std::setw(8) << "Rec." << std::setw(8) << "Acc." << std::setw(9) << "Support" << '\n';
  for (const auto& m : per_tag) {
    out << std::left << std::setw(static_cast<int>(width)) << m.tag.value << std::right;
    if (m.support == 0 && m.predicted == 0) {
      out << std::setw(8) << "-" << std::setw(8) << "-" << std::setw(8) << "-";
    } else {
      out << std::setw(8) << m.precision << std::setw(8);
      if (m.support) out << m.recall; else out << "-";
      out << std::setw(8) << m.accuracy;
    }
    out << std::setw(9) << m.support << '\n';
  }
  out << "macro precision " << macro_precision << ", macro recall " << macro_recall << ", macro F1 " << macro_f1
      << '\n';
  out << "avg per-label accuracy " << avg_per_label_accuracy << ", subset accuracy " << subset_accuracy << '\n';
  if (!zero_prediction_tags.empty()) {
    out << "no predictions (precision taken as 0):";
    for (const auto& t : zero_prediction_tags) out << ' ' << t.value;
    out << '\n';
  }
  if (!unsupported_tags.empty()) {
    out << "no support (excluded from recall):";
    for (const auto& t : unsupported_tags) out << ' ' << t.value;
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json SelectionResult::to_json() const {
  nlohmann::ordered_json j;
  j["best"] = {{"c", best.c}, {"gamma", best.gamma}};
  auto& arr = j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& s : scores) {
    nlohmann::ordered_json c;
    c["c"] = s.params.c;
    c["gamma"] = s.params.gamma;
    if (s.failed)
      c["error"] = s.error;
    else
      c["macro_f_beta"] = s.macro_f_beta;
    arr.push_back(std::move(c));
  }
  return j;
}

SelectionResult nested_cv_select(std::span<const LabeledExample> examples, std::span<const Hyperparameters> grid,
                                 std::span<const TagId> universe, const TrainPredict& train_predict, std::uint64_t seed,
                                 double beta, std::size_t inner_k, std::size_t jobs) {
  if (grid.empty()) throw UsageError("hyperparameter grid is empty");
  const auto folds = kfold_iterative(examples, inner_k, seed);
  const auto splits = cv_splits(examples, folds);
  std::vector<TagSet> truth;
  truth.reserve(examples.size());
  for (const auto& e : examples) truth.push_back(e.tags);

  SelectionResult result;
  result.scores.resize(grid.size());
  util::parallel_for(grid.size(), jobs, [&](std::size_t c) {
    auto& score = result.scores[c];
    score.params = grid[c];
    try {
      std::vector<TagSet> pooled(examples.size());
      for (const auto& split : splits) {
        auto predicted = train_predict(grid[c], split.train, split.test);
        if (predicted.size() != split.test.size()) throw InternalError("candidate returned the wrong number of predictions");
        for (std::size_t i = 0; i < split.test.size(); ++i) pooled[split.test[i]] = std::move(predicted[i]);
      }
      score.macro_f_beta = compute_metrics(pooled, truth, universe, beta).macro_f_beta;
    } catch (const std::exception& e) {
      score.failed = true;
      score.error = e.what();
    }
  });

  const CandidateScore* best = nullptr;
  for (const auto& s : result.scores) {
    if (s.failed) continue;
    if (!best || s.macro_f_beta > best->macro_f_beta + 1e-12) {
      best = &s;
      continue;
    }
    if (std::abs(s.macro_f_beta - best->macro_f_beta) <= 1e-12 &&
        (s.params.c < best->params.c || (s.params.c == best->params.c && s.params.gamma < best->params.gamma)))
      best = &s;
  }
  if (!best) throw DataError("every hyperparameter candidate failed: " + result.scores.front().error);
  result.best = best->params;
  return result;
}

}  // namespace linnaeus
