#include <doctest.h>

#include <random>

#include "linnaeus/error.hpp"
#include "linnaeus/stacking.hpp"

using namespace linnaeus;

namespace {

const Taxonomy& tax() { return Taxonomy::default_taxonomy(); }

/// Meta rows whose language-model slot for each tag equals the truth, plus noisy svm slots.
void informative(std::mt19937_64& rng, std::size_t n, Matrix& x, std::vector<TagSet>& labels) {
  const auto& top = tax().top_level();
  std::uniform_real_distribution<double> noise(0, 1);
  x = Matrix(0, 2 * top.size());
  labels.clear();
  for (std::size_t i = 0; i < n; ++i) {
    TagSet s{top[i % top.size()]};
    if (i % 5 == 0) s.insert(top[(i + 3) % top.size()]);
    TagScores llm, svm;
    for (const auto& t : s) llm[t] = 1.0;
    for (const auto& t : top) svm[t] = noise(rng);
    x.append_row(build_meta_features(tax(), llm, svm).values);
    labels.push_back(s);
  }
}

StackedModel stub_model(std::vector<double> priors, double threshold) {
  StackedModel m;
  m.width = 2;
  m.threshold = threshold;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    LinearMetaModel lm;
    lm.tag = TagId("t" + std::to_string(i));
    lm.stub = true;
    lm.prior = priors[i];
    lm.weights = {0, 0};
    m.tags.push_back(lm.tag);
    m.models.push_back(lm);
  }
  return m;
}

}  // namespace

TEST_SUITE("stacking") {
  TEST_CASE("meta-feature placement") {
    TagScores llm{{TagId("government"), 0.9}};
    TagScores svm{{TagId("government"), 0.7}, {TagId("access"), 0.2}};
    auto v = build_meta_features(tax(), llm, svm).values;
    REQUIRE(v.size() == 36);
    const auto gi = tax().top_index(TagId("government")), ai = tax().top_index(TagId("access"));
    for (std::size_t i = 0; i < 36; ++i) {
      double want = 0;
      if (i == gi) want = 0.9;
      if (i == 18 + gi) want = 0.7;
      if (i == 18 + ai) want = 0.2;
      CHECK(v[i] == want);
    }
    auto zero = build_meta_features(tax(), {}, {}).values;
    CHECK(std::all_of(zero.begin(), zero.end(), [](double d) { return d == 0.0; }));
    CHECK_THROWS_AS(build_meta_features(tax(), {{TagId("government.executive"), 1.0}}, {}), DataError);
    CHECK_THROWS_AS(build_meta_features(tax(), {}, {{TagId("spaceship"), 1.0}}), DataError);
  }

  TEST_CASE("insertion order does not matter") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    const auto& top = tax().top_level();
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::pair<TagId, double>> entries;
      for (const auto& t : top)
        if (rng() % 2) entries.emplace_back(t, u(rng));
      TagScores a, b;
      for (const auto& e : entries) a.insert(e);
      std::shuffle(entries.begin(), entries.end(), rng);
      for (const auto& e : entries) b.insert(e);
      CHECK(build_meta_features(tax(), a, a).values == build_meta_features(tax(), b, b).values);
    }
  }

  TEST_CASE("perfectly informative slot gives training F1 of one") {
    std::mt19937_64 rng(5);
    Matrix x;
    std::vector<TagSet> labels;
    informative(rng, 180, x, labels);
    const auto& top = tax().top_level();
    auto model = fit_stacking(x, labels, top);
    CHECK(model.width == 36);
    std::vector<TagSet> pred;
    for (std::size_t i = 0; i < x.rows(); ++i) pred.push_back(stacked_predict(model, x.row(i)).tags);
    auto m = compute_metrics(pred, labels, top);
    for (const auto& t : m.per_tag) CHECK(t.f1 == doctest::Approx(1.0));
    for (const auto& p : pred) CHECK(tax().validate_tagset(p).ok());
  }

  TEST_CASE("all-zero meta features give a prior stub") {
    Matrix x(10, 36, 0.0);
    std::vector<TagSet> labels(10);
    for (std::size_t i = 0; i < 10; i += 2) labels[i] = make_tagset({"government"});
    auto model = fit_stacking(x, labels, tax().top_level());
    for (const auto& m : model.models) CHECK(m.stub);
    auto p = stacked_predict(model, x.row(0));
    CHECK(p.probabilities.at(TagId("government")) == doctest::Approx(0.5));
    CHECK(p.probabilities.at(TagId("access")) == 0.0);
  }

  TEST_CASE("duplicated rows keep the decision boundary") {
    std::mt19937_64 rng(9);
    Matrix x;
    std::vector<TagSet> labels;
    informative(rng, 90, x, labels);
    Matrix x2 = x;
    auto labels2 = labels;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      x2.append_row(x.row(i));
      labels2.push_back(labels[i]);
    }
    const auto& top = tax().top_level();
    auto a = fit_stacking(x, labels, top), b = fit_stacking(x2, labels2, top);
    std::uniform_real_distribution<double> u(0, 1);
    for (int probe = 0; probe < 200; ++probe) {
      std::vector<double> v(36);
      for (std::size_t i = 0; i < 18; ++i) v[i] = std::vector<double>{0.0, 0.1, 0.9, 1.0}[rng() % 4];
      for (std::size_t i = 18; i < 36; ++i) v[i] = u(rng);
      for (std::size_t t = 0; t < a.models.size(); ++t)
        CHECK((a.models[t].decision(v) >= 0) == (b.models[t].decision(v) >= 0));
    }
    for (std::size_t t = 0; t < a.models.size(); ++t) {
      CHECK(a.models[t].bias == doctest::Approx(b.models[t].bias).epsilon(1e-6));
      for (std::size_t k = 0; k < 36; ++k)
        CHECK(a.models[t].weights[k] == doctest::Approx(b.models[t].weights[k]).epsilon(1e-6));
    }
  }

  TEST_CASE("threshold rule") {
    auto m = stub_model({0.51, 0.49}, 0.5);
    const double meta[] = {0, 0};
    auto p = stacked_predict(m, meta);
    CHECK(p.tags == make_tagset({"t0"}));
    auto low = stub_model({0.2, 0.49}, 0.5);
    CHECK(stacked_predict(low, meta).tags.empty());
    CHECK(stacked_predict(m, meta).probabilities == p.probabilities);
    const double wrong[] = {0, 0, 0};
    CHECK_THROWS_AS(stacked_predict(m, wrong), DataError);
  }

  TEST_CASE("raising the threshold only removes tags") {
    std::mt19937_64 rng(13);
    Matrix x;
    std::vector<TagSet> labels;
    informative(rng, 120, x, labels);
    auto model = fit_stacking(x, labels, tax().top_level());
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> v(36);
      for (auto& d : v) d = u(rng);
      double t1 = u(rng), t2 = u(rng);
      if (t1 > t2) std::swap(t1, t2);
      auto m1 = model, m2 = model;
      m1.threshold = t1;
      m2.threshold = t2;
      auto s1 = stacked_predict(m1, v).tags, s2 = stacked_predict(m2, v).tags;
      CHECK(std::includes(s1.begin(), s1.end(), s2.begin(), s2.end()));
    }
  }

  TEST_CASE("serialization round trip") {
    std::mt19937_64 rng(21);
    Matrix x;
    std::vector<TagSet> labels;
    informative(rng, 60, x, labels);
    auto model = fit_stacking(x, labels, tax().top_level());
    auto back = StackedModel::from_json(model.to_json());
    for (std::size_t i = 0; i < x.rows(); ++i)
      CHECK(stacked_predict(back, x.row(i)).probabilities == stacked_predict(model, x.row(i)).probabilities);
  }
}
