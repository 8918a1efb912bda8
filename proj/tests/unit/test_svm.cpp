#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "linnaeus/error.hpp"
#include "linnaeus/svm.hpp"
#include "../support/oracles.hpp"

using namespace linnaeus;

namespace {

double column_mean(const Matrix& m, std::size_t c) {
  double s = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c);
  return s / double(m.rows());
}

double column_pop_std(const Matrix& m, std::size_t c) {
  const double mu = column_mean(m, c);
  double s = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) s += (m(r, c) - mu) * (m(r, c) - mu);
  return std::sqrt(s / double(m.rows()));
}

double platt_nll(const Calibration& cal, const std::vector<double>& dec, const std::vector<int>& y) {
  double n1 = 0, n0 = 0;
  for (int v : y) (v > 0 ? n1 : n0) += 1;
  double nll = 0;
  for (std::size_t i = 0; i < dec.size(); ++i) {
    const double t = y[i] > 0 ? (n1 + 1) / (n1 + 2) : 1 / (n0 + 2);
    const double p = std::clamp(cal(dec[i]), 1e-300, 1 - 1e-16);
    nll -= t * std::log(p) + (1 - t) * std::log1p(-p);
  }
  return nll;
}

double auc(const std::vector<double>& score, const std::vector<int>& y) {
  double pairs = 0, good = 0;
  for (std::size_t i = 0; i < score.size(); ++i)
    for (std::size_t j = 0; j < score.size(); ++j)
      if (y[i] > 0 && y[j] < 0) {
        ++pairs;
        good += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
      }
  return good / pairs;
}

}  // namespace

TEST_SUITE("svm") {
  TEST_CASE("rbf kernel") {
    const double x[] = {0, 0}, y[] = {1, 0};
    CHECK(rbf_kernel(x, x, 0.7) == 1.0);
    CHECK(rbf_kernel(x, y, 1.0) == doctest::Approx(0.367879).epsilon(1e-6));
    CHECK(rbf_kernel(x, y, 2.0) < rbf_kernel(x, y, 1.0));
    const double z[] = {1, 2, 3};
    CHECK_THROWS(rbf_kernel(x, z, 1.0));
    CHECK_THROWS(rbf_kernel(x, y, 0.0));
  }

  TEST_CASE("rbf kernel matrices are positive semi-definite") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0, 2);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = 1 + rng() % 6;
      const double gamma = std::exp(g(rng));
      std::vector<std::vector<double>> pts(20, std::vector<double>(d));
      for (auto& p : pts)
        for (auto& v : p) v = g(rng);
      Eigen::MatrixXd k(20, 20);
      for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) k(i, j) = rbf_kernel(pts[i], pts[j], gamma);
      CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
  }

  TEST_CASE("imputer examples") {
    auto x = Matrix::from_rows({{0, 0}, {2, 2}, {1, kMissing}});
    auto out = impute(fit_imputer(x, 2), x);
    CHECK(out(2, 1) == doctest::Approx(1.0));
    auto full = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(impute(fit_imputer(full, 5), full) == full);
    auto hollow = Matrix::from_rows({{1, kMissing}, {2, kMissing}});
    auto filled = impute(fit_imputer(hollow, 5), hollow);
    CHECK(filled(0, 1) == 0.0);
    CHECK(filled(1, 1) == 0.0);
    CHECK_THROWS_AS(fit_imputer(Matrix(0, 3), 5), DataError);
  }

  TEST_CASE("imputer matches exhaustive nearest-donor search and keeps observed cells") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0, 3);
    std::bernoulli_distribution hole(0.2);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 2 + rng() % 30, d = 1 + rng() % 6, k = 1 + rng() % 6;
      Matrix x(n, d);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) x(r, c) = hole(rng) ? kMissing : std::round(g(rng) * 4) / 4;
      auto got = impute(fit_imputer(x, k), x);
      auto want = oracle::knn_impute(x, k);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
          if (!std::isnan(x(r, c))) CHECK(got(r, c) == x(r, c));
          CHECK(got(r, c) == doctest::Approx(want(r, c)).epsilon(1e-12));
        }
    }
  }

  TEST_CASE("scaler") {
    auto x = Matrix::from_rows({{2, 5}, {4, 5}, {6, 5}});
    auto s = scale(fit_scaler(x), x);
    CHECK(s(0, 0) == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(s(1, 0) == doctest::Approx(0.0));
    CHECK(s(2, 0) == doctest::Approx(1.224745).epsilon(1e-6));
    for (std::size_t r = 0; r < 3; ++r) CHECK(s(r, 1) == 0.0);
    CHECK(fit_scaler(x).constant[1]);
    CHECK_THROWS_AS(fit_scaler(Matrix(0, 2)), DataError);

    std::mt19937_64 rng(43);
    std::normal_distribution<double> g(5, 7);
    for (int trial = 0; trial < 50; ++trial) {
      Matrix m(3 + rng() % 50, 1 + rng() % 5);
      for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = g(rng);
      auto once = scale(fit_scaler(m), m);
      for (std::size_t c = 0; c < m.cols(); ++c) {
        CHECK(std::abs(column_mean(once, c)) < 1e-9);
        CHECK(std::abs(column_pop_std(once, c) - 1) < 1e-9);
      }
      auto twice = scale(fit_scaler(once), once);
      for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) CHECK(std::abs(twice(r, c) - once(r, c)) <= 1e-12);
    }
  }

  TEST_CASE("impute then scale preserves the order of observed values") {
    std::mt19937_64 rng(47);
    std::normal_distribution<double> g(0, 10);
    std::bernoulli_distribution hole(0.25);
    for (int trial = 0; trial < 50; ++trial) {
      Matrix x(10 + rng() % 20, 3);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < 3; ++c) x(r, c) = hole(rng) ? kMissing : g(rng);
      auto filled = impute(fit_imputer(x, 5), x);
      auto scaled = scale(fit_scaler(filled), filled);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.rows(); ++j)
            if (!std::isnan(x(i, c)) && !std::isnan(x(j, c)) && x(i, c) < x(j, c)) CHECK(scaled(i, c) <= scaled(j, c));
    }
  }

  TEST_CASE("dual solution is feasible and satisfies KKT") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 20; ++trial) {
      Matrix x;
      std::vector<int> y;
      if (trial % 2)
        oracle::rings(rng, 40, x, y);
      else
        oracle::blobs(rng, 30, 0.5, x, y);
      const double c = trial % 3 == 0 ? 0.5 : 10.0;
      const Kernel k{KernelKind::rbf, 0.5};
      auto sol = solve_dual(x, y, k, c);
      double sum = 0;
      for (std::size_t i = 0; i < sol.alpha.size(); ++i) {
        CHECK(sol.alpha[i] >= 0.0);
        CHECK(sol.alpha[i] <= c);
        sum += sol.alpha[i] * y[i];
      }
      CHECK(std::abs(sum) <= 1e-6);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double f = -sol.rho;
        for (std::size_t j = 0; j < x.rows(); ++j) f += sol.alpha[j] * y[j] * k(x.row(j), x.row(i));
        const double margin = y[i] * f;
        if (sol.alpha[i] <= 1e-12) CHECK(margin >= 1 - 2e-3);
        else if (sol.alpha[i] >= c - 1e-12) CHECK(margin <= 1 + 2e-3);
        else CHECK(std::abs(margin - 1) <= 2e-3);
      }
    }
  }

  TEST_CASE("separable blobs are fit exactly") {
    std::mt19937_64 rng(59);
    Matrix x;
    std::vector<int> y;
    oracle::blobs(rng, 40, 2.0, x, y);
    auto m = train_binary(x, y, Kernel{KernelKind::rbf, 0.5}, 10.0);
    for (std::size_t i = 0; i < x.rows(); ++i) CHECK((m.decision(x.row(i)) > 0) == (y[i] > 0));
    auto lin = train_binary(x, y, Kernel{KernelKind::linear, 0}, 10.0);
    for (std::size_t i = 0; i < x.rows(); ++i) CHECK((lin.decision(x.row(i)) > 0) == (y[i] > 0));
  }

  TEST_CASE("concentric rings generalise") {
    std::mt19937_64 rng(61);
    Matrix train, test;
    std::vector<int> ytrain, ytest;
    oracle::rings(rng, 100, train, ytrain);
    oracle::rings(rng, 100, test, ytest);
    auto m = train_binary(train, ytrain, Kernel{KernelKind::rbf, 1.0}, 10.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.rows(); ++i) correct += (m.decision(test.row(i)) > 0) == (ytest[i] > 0);
    CHECK(double(correct) / double(test.rows()) >= 0.95);
  }

  TEST_CASE("platt fit reaches the grid minimum and is monotone") {
    std::mt19937_64 rng(67);
    std::normal_distribution<double> g(0, 1);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> dec;
      std::vector<int> y;
      for (int i = 0; i < 80; ++i) {
        const int label = i % 2 ? 1 : -1;
        dec.push_back(label * 0.8 + g(rng));
        y.push_back(label);
      }
      auto cal = fit_platt(dec, y);
      CHECK(cal.a <= 0.0);
      double best = std::numeric_limits<double>::infinity();
      for (double a = -8; a <= 0; a += 0.05)
        for (double b = -3; b <= 3; b += 0.05) best = std::min(best, platt_nll(Calibration{a, b}, dec, y));
      CHECK(platt_nll(cal, dec, y) <= best + 1e-9);
      for (double f = -5; f < 5; f += 0.1) CHECK(cal(f) <= cal(f + 0.1));
    }
  }

  TEST_CASE("multi-label model on separable blobs") {
    std::mt19937_64 rng(71);
    Matrix x, probe;
    std::vector<int> y, yprobe;
    oracle::blobs(rng, 40, 2.0, x, y);
    oracle::blobs(rng, 40, 2.0, probe, yprobe);
    std::vector<TagSet> labels;
    for (int v : y) labels.push_back(v > 0 ? make_tagset({"pos"}) : TagSet{});
    std::vector<TagId> tags{TagId("pos"), TagId("never")};
    std::vector<Hyperparameters> hp{{10.0, 0.5}};
    SvmOptions opt;
    opt.seed = 3;
    auto model = fit_multilabel_svm(x, labels, tags, hp, opt);
    auto p = model.predict_proba(probe);
    std::vector<double> score;
    for (std::size_t i = 0; i < probe.rows(); ++i) {
      score.push_back(p(i, 0));
      CHECK(p(i, 0) >= 0.0);
      CHECK(p(i, 0) <= 1.0);
      CHECK(p(i, 1) == 0.0);
    }
    CHECK(auc(score, yprobe) == 1.0);
    CHECK(model.models()[1].stub);
    CHECK(model.predict_proba(probe) == p);

    // A support vector well inside the positive side scores above one half.
    const double deep[] = {4.0, 0.0};
    Matrix one(0, 2);
    one.append_row(deep);
    CHECK(model.predict_proba(one)(0, 0) > 0.5);

    auto restored = MultiLabelSvmModel::from_json(model.to_json());
    CHECK(restored.predict_proba(probe) == p);

    Matrix wrong(1, 3);
    CHECK_THROWS_AS(model.predict_proba(wrong), DataError);
    Matrix bad = x;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS(fit_multilabel_svm(bad, labels, tags, hp, opt));
  }

  TEST_CASE("default grid") {
    auto grid = default_grid(20);
    CHECK(grid.size() == 16);
    CHECK(grid.front() == Hyperparameters{0.1, 0.05});
    CHECK(grid.back() == Hyperparameters{100.0, 1.0});
  }
}
