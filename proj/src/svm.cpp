#include "linnaeus/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m;
  if (rows.empty()) return m;
  m.cols_ = rows.front().size();
  for (const auto& r : rows) m.append_row(r);
  return m;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && data_.empty()) cols_ = values.size();
  if (values.size() != cols_)
    throw DataError("row of width " + std::to_string(values.size()) + " appended to matrix of width " +
                    std::to_string(cols_));
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(0, cols_);
  out.data_.reserve(indices.size() * cols_);
  for (auto i : indices) out.append_row(row(i));
  out.cols_ = cols_;
  return out;
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
  if (x.size() != y.size()) throw DataError("rbf kernel: dimension mismatch");
  if (!(gamma > 0)) throw UsageError("rbf kernel: gamma must be positive");
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

double linear_kernel(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("linear kernel: dimension mismatch");
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double Kernel::operator()(std::span<const double> x, std::span<const double> y) const {
  return kind == KernelKind::rbf ? rbf_kernel(x, y, gamma) : linear_kernel(x, y);
}

// ---------------------------------------------------------------------------
// Imputation and scaling

ImputationModel fit_imputer(const Matrix& x, std::size_t k) {
  if (x.empty()) throw DataError("imputer: empty matrix");
  if (k == 0) throw UsageError("imputer: k must be at least 1");
  return {k, x, 0.0};
}

Matrix impute(const ImputationModel& model, const Matrix& x) {
  const auto& donors = model.donors;
  if (x.cols() != donors.cols()) throw DataError("imputer: dimension mismatch");
  Matrix out = x;
  const std::size_t d = x.cols();
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(donors.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto query = x.row(r);
    if (std::none_of(query.begin(), query.end(), [](double v) { return std::isnan(v); })) continue;

    // Distance to every donor once; per feature we then keep the nearest donors observing it.
    dist.clear();
    for (std::size_t s = 0; s < donors.rows(); ++s) {
      auto donor = donors.row(s);
      double sum = 0;
      std::size_t common = 0;
      for (std::size_t c = 0; c < d; ++c) {
        if (std::isnan(query[c]) || std::isnan(donor[c])) continue;
        const double diff = query[c] - donor[c];
        sum += diff * diff;
        ++common;
      }
      if (common == 0) continue;
      dist.emplace_back(std::sqrt(sum * static_cast<double>(d) / static_cast<double>(common)), s);
    }
    std::stable_sort(dist.begin(), dist.end());

    for (std::size_t c = 0; c < d; ++c) {
      if (!std::isnan(query[c])) continue;
      double sum = 0;
      std::size_t used = 0;
      for (const auto& [_, s] : dist) {
        const double v = donors(s, c);
        if (std::isnan(v)) continue;
        sum += v;
        if (++used == model.k) break;
      }
      out(r, c) = used ? sum / static_cast<double>(used) : model.fallback;
    }
  }
  return out;
}

ScalingModel fit_scaler(const Matrix& x) {
  if (x.empty()) throw DataError("scaler: empty matrix");
  const std::size_t d = x.cols();
  const double n = static_cast<double>(x.rows());
  ScalingModel m;
  m.mean.assign(d, 0.0);
  m.stddev.assign(d, 0.0);
  m.constant.assign(d, false);
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!std::isfinite(x(r, c))) throw DataError("scaler: non-finite value in column " + std::to_string(c));
      sum += x(r, c);
    }
    const double mean = sum / n;
    double ss = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    m.mean[c] = mean;
    m.stddev[c] = std::sqrt(ss / n);
    bool constant = true;
    for (std::size_t r = 1; r < x.rows() && constant; ++r) constant = x(r, c) == x(0, c);
    m.constant[c] = constant || m.stddev[c] == 0.0;
    if (m.constant[c]) m.stddev[c] = 0.0;
  }
  return m;
}

Matrix scale(const ScalingModel& model, const Matrix& x) {
  if (x.cols() != model.mean.size()) throw DataError("scaler: dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      out(r, c) = model.constant[c] ? 0.0 : (x(r, c) - model.mean[c]) / model.stddev[c];
  return out;
}

// ---------------------------------------------------------------------------
// SMO solver

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kFullKernelLimit = 4096;

class KernelRows {
 public:
  KernelRows(const Matrix& x, std::span<const int> y, const Kernel& kernel)
      : x_(x), y_(y), kernel_(kernel), n_(x.rows()), diag_(n_) {
    for (std::size_t i = 0; i < n_; ++i) diag_[i] = kernel_(x_.row(i), x_.row(i));
    if (n_ <= kFullKernelLimit) {
      full_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i; j < n_; ++j) {
          const double q = y_[i] * y_[j] * kernel_(x_.row(i), x_.row(j));
          full_[i * n_ + j] = q;
          full_[j * n_ + i] = q;
        }
    } else {
      buf_[0].resize(n_);
      buf_[1].resize(n_);
    }
  }

  /// Row i of Q = y y^T K. `slot` selects one of two scratch buffers when rows are computed lazily.
  std::span<const double> q_row(std::size_t i, int slot) {
    if (!full_.empty()) return {full_.data() + i * n_, n_};
    auto& b = buf_[slot];
    for (std::size_t j = 0; j < n_; ++j) b[j] = y_[i] * y_[j] * kernel_(x_.row(i), x_.row(j));
    return b;
  }
  double diag(std::size_t i) const { return diag_[i]; }

 private:
  const Matrix& x_;
  std::span<const int> y_;
  const Kernel& kernel_;
  std::size_t n_;
  std::vector<double> diag_;
  std::vector<double> full_;
  std::vector<double> buf_[2];
};

}  // namespace

DualSolution solve_dual(const Matrix& x, std::span<const int> y, const Kernel& kernel, double c,
                        const SolverOptions& options) {
  const std::size_t n = x.rows();
  if (n == 0) throw DataError("svm: no training rows");
  if (y.size() != n) throw DataError("svm: label count does not match rows");
  if (!(c > 0)) throw UsageError("svm: C must be positive");
  for (auto v : y)
    if (v != 1 && v != -1) throw DataError("svm: labels must be +1 or -1");
  for (std::size_t r = 0; r < n; ++r)
    for (double v : x.row(r))
      if (!std::isfinite(v)) throw DataError("svm: non-finite feature value");

  KernelRows q(x, y, kernel);
  std::vector<double> alpha(n, 0.0), grad(n, -1.0);
  auto upper = [&](std::size_t t) { return alpha[t] >= c; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  const std::size_t cap = options.max_iterations ? options.max_iterations : std::max<std::size_t>(1000000, 100 * n);

  std::size_t iter = 0;
  for (;; ++iter) {
    if (iter >= cap) throw InternalError("svm: solver did not converge within " + std::to_string(cap) + " iterations");

    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t ii = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          ii = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        ii = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (ii < 0) break;
    const auto i = static_cast<std::size_t>(ii);
    auto qi = q.q_row(i, 0);

    double gmax2 = -std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    std::ptrdiff_t jj = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (lower(t)) continue;
        const double diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        if (diff > 0) {
          double quad = q.diag(i) + q.diag(t) - 2.0 * y[i] * qi[t];
          const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
          if (obj <= best_obj) {
            best_obj = obj;
            jj = static_cast<std::ptrdiff_t>(t);
          }
        }
      } else {
        if (upper(t)) continue;
        const double diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (diff > 0) {
          double quad = q.diag(i) + q.diag(t) + 2.0 * y[i] * qi[t];
          const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
          if (obj <= best_obj) {
            best_obj = obj;
            jj = static_cast<std::ptrdiff_t>(t);
          }
        }
      }
    }
    if (gmax + gmax2 < options.tolerance || jj < 0) break;
    const auto j = static_cast<std::size_t>(jj);
    auto qj = q.q_row(j, 1);

    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = q.diag(i) + q.diag(j) + 2.0 * qi[j];
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = q.diag(i) + q.diag(j) - 2.0 * qi[j];
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += qi[t] * dai + qj[t] * daj;
  }

  // Bias from free vectors, or the midpoint of the feasible interval when none are free.
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0;
  std::size_t free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free;
      sum_free += yg;
    }
  }
  DualSolution sol;
  sol.rho = free ? sum_free / static_cast<double>(free) : (ub + lb) / 2.0;
  sol.alpha = std::move(alpha);
  sol.iterations = iter;
  return sol;
}

double BinarySvm::decision(std::span<const double> x) const {
  if (!support_vectors.empty() && x.size() != support_vectors.cols()) throw DataError("svm: dimension mismatch");
  double s = -rho;
  for (std::size_t i = 0; i < support_vectors.rows(); ++i) s += coef[i] * kernel(support_vectors.row(i), x);
  return s;
}

BinarySvm train_binary(const Matrix& x, std::span<const int> y, const Kernel& kernel, double c,
                       const SolverOptions& options) {
  auto sol = solve_dual(x, y, kernel, c, options);
  BinarySvm m;
  m.kernel = kernel;
  m.c = c;
  m.rho = sol.rho;
  m.support_vectors = Matrix(0, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (sol.alpha[i] <= 0) continue;
    m.support_vectors.append_row(x.row(i));
    m.coef.push_back(sol.alpha[i] * y[i]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Calibration

double Calibration::operator()(double decision) const {
  const double f = a * decision + b;
  // Two branches keep exp() from overflowing.
  return f >= 0 ? std::exp(-f) / (1.0 + std::exp(-f)) : 1.0 / (1.0 + std::exp(f));
}

Calibration fit_platt(std::span<const double> dec, std::span<const int> y) {
  if (dec.size() != y.size() || dec.empty()) throw DataError("platt: decision/label size mismatch");
  double prior1 = 0, prior0 = 0;
  for (auto v : y) (v > 0 ? prior1 : prior0) += 1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  const std::size_t n = dec.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = y[i] > 0 ? hi : lo;

  auto objective = [&](double a, double b) {
    double f = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * a + b;
      f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(a, b);
  constexpr double kSigma = 1e-12, kMinStep = 1e-10, kEps = 1e-5;
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * a + b;
      double p, q;
      if (z >= 0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  if (a > 0) {
    // A positive slope would invert the ranking; fall back to the smoothed base rate.
    double mean_t = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(n);
    a = 0.0;
    b = std::log((1.0 - mean_t) / mean_t);
  }
  return {a, b};
}

// ---------------------------------------------------------------------------
// Per-tag models

double TagModel::probability(std::span<const double> x) const {
  if (stub) return prior;
  return calibration(svm.decision(x));
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

bool rows_identical(const Matrix& x) {
  for (std::size_t r = 1; r < x.rows(); ++r)
    if (!std::equal(x.row(r).begin(), x.row(r).end(), x.row(0).begin())) return false;
  return true;
}

Kernel make_kernel(const SvmOptions& options, const Hyperparameters& params) {
  Kernel k;
  k.kind = options.kernel;
  k.gamma = options.kernel == KernelKind::rbf ? params.gamma : 0.0;
  if (k.kind == KernelKind::rbf && !(k.gamma > 0)) throw UsageError("rbf kernel needs gamma > 0");
  return k;
}

}  // namespace

TagModel fit_tag_model(const TagId& tag, const Matrix& x, std::span<const int> y, const Hyperparameters& params,
                       const SvmOptions& options) {
  TagModel m;
  m.tag = tag;
  const std::size_t n = x.rows();
  std::size_t positives = 0;
  for (auto v : y) positives += v > 0;
  m.prior = n ? static_cast<double>(positives) / static_cast<double>(n) : 0.0;
  if (positives == 0 || positives == n || rows_identical(x)) {
    m.stub = true;
    return m;
  }
  const Kernel kernel = make_kernel(options, params);
  try {
    // Out-of-fold decision values, folds stratified by class.
    std::vector<double> oof(n, 0.0);
    const std::size_t folds = std::min<std::size_t>(options.calibration_folds, n);
    if (folds >= 2) {
      util::Rng rng(options.seed ^ fnv1a(tag.value));
      std::vector<std::size_t> pos, neg;
      for (std::size_t i = 0; i < n; ++i) (y[i] > 0 ? pos : neg).push_back(i);
      rng.shuffle(pos.begin(), pos.end());
      rng.shuffle(neg.begin(), neg.end());
      std::vector<std::size_t> fold_of(n);
      std::size_t next = 0;
      for (auto i : pos) fold_of[i] = next++ % folds;
      for (auto i : neg) fold_of[i] = next++ % folds;
      for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
        if (test.empty()) continue;
        std::vector<int> ty;
        for (auto i : train) ty.push_back(y[i]);
        const bool has_pos = std::find(ty.begin(), ty.end(), 1) != ty.end();
        const bool has_neg = std::find(ty.begin(), ty.end(), -1) != ty.end();
        if (!has_pos || !has_neg) {
          for (auto i : test) oof[i] = has_pos ? 1.0 : -1.0;
          continue;
        }
        const auto sub = x.select_rows(train);
        const auto model = train_binary(sub, ty, kernel, params.c, options.solver);
        for (auto i : test) oof[i] = model.decision(x.row(i));
      }
    }
    m.svm = train_binary(x, y, kernel, params.c, options.solver);
    if (folds < 2)
      for (std::size_t i = 0; i < n; ++i) oof[i] = m.svm.decision(x.row(i));
    m.calibration = fit_platt(oof, y);
  } catch (const InternalError& e) {
    throw InternalError("tag '" + tag.value + "': " + e.what());
  }
  return m;
}

Matrix MultiLabelSvmModel::predict_proba(const Matrix& raw) const {
  if (raw.cols() != dimension())
    throw DataError("svm: feature width " + std::to_string(raw.cols()) + " differs from trained width " +
                    std::to_string(dimension()));
  const Matrix x = scale(scaler_, impute(imputer_, raw));
  Matrix out(x.rows(), models_.size());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t t = 0; t < models_.size(); ++t) out(r, t) = models_[t].probability(x.row(r));
  return out;
}

MultiLabelSvmModel fit_multilabel_svm(const Matrix& raw, const std::vector<TagSet>& labels,
                                      std::span<const TagId> tags, std::span<const Hyperparameters> params,
                                      const SvmOptions& options) {
  if (raw.empty()) throw DataError("svm: no training rows");
  if (labels.size() != raw.rows()) throw DataError("svm: label rows do not match feature rows");
  if (params.size() != 1 && params.size() != tags.size())
    throw UsageError("svm: need one hyperparameter set or one per tag");

  MultiLabelSvmModel model;
  model.tags_.assign(tags.begin(), tags.end());
  model.imputer_ = fit_imputer(raw, options.impute_k);
  const Matrix imputed = impute(model.imputer_, raw);
  model.scaler_ = fit_scaler(imputed);
  const Matrix x = scale(model.scaler_, imputed);

  model.models_.resize(tags.size());
  util::parallel_for(tags.size(), options.jobs, [&](std::size_t t) {
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i].contains(tags[t]) ? 1 : -1;
    model.models_[t] = fit_tag_model(tags[t], x, y, params.size() == 1 ? params[0] : params[t], options);
  });
  return model;
}

std::vector<Hyperparameters> default_grid(std::size_t dimension) {
  std::vector<Hyperparameters> grid;
  const double inv_d = dimension ? 1.0 / static_cast<double>(dimension) : 1.0;
  for (double c : {0.1, 1.0, 10.0, 100.0})
    for (double g : {inv_d, 0.01, 0.1, 1.0}) grid.push_back({c, g});
  return grid;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

double number_from(const nlohmann::json& j) { return j.is_null() ? kMissing : j.get<double>(); }

}  // namespace

nlohmann::ordered_json to_json(const Matrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  auto& data = j["data"] = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (double v : m.row(r)) data.push_back(number_or_null(v));
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto& data = j.at("data");
  if (data.size() != rows * cols) throw DataError("matrix: data length mismatch");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = number_from(data[r * cols + c]);
  return m;
}

nlohmann::ordered_json to_json(const BinarySvm& m) {
  nlohmann::ordered_json j;
  j["kernel"] = m.kernel.kind == KernelKind::rbf ? "rbf" : "linear";
  j["gamma"] = m.kernel.gamma;
  j["c"] = m.c;
  j["rho"] = m.rho;
  j["coef"] = m.coef;
  j["support_vectors"] = to_json(m.support_vectors);
  return j;
}

BinarySvm binary_svm_from_json(const nlohmann::json& j) {
  BinarySvm m;
  const auto kind = j.at("kernel").get<std::string>();
  if (kind != "rbf" && kind != "linear") throw DataError("svm: unknown kernel '" + kind + "'");
  m.kernel.kind = kind == "rbf" ? KernelKind::rbf : KernelKind::linear;
  m.kernel.gamma = j.at("gamma").get<double>();
  m.c = j.at("c").get<double>();
  m.rho = j.at("rho").get<double>();
  m.coef = j.at("coef").get<std::vector<double>>();
  m.support_vectors = matrix_from_json(j.at("support_vectors"));
  if (m.coef.size() != m.support_vectors.rows()) throw DataError("svm: coefficient count mismatch");
  return m;
}

nlohmann::ordered_json to_json(const TagModel& m) {
  nlohmann::ordered_json j;
  j["tag"] = m.tag.value;
  j["stub"] = m.stub;
  j["prior"] = m.prior;
  if (!m.stub) {
    j["calibration"] = {{"a", m.calibration.a}, {"b", m.calibration.b}};
    j["svm"] = to_json(m.svm);
  }
  return j;
}

TagModel tag_model_from_json(const nlohmann::json& j) {
  TagModel m;
  m.tag = TagId(j.at("tag").get<std::string>());
  m.stub = j.at("stub").get<bool>();
  m.prior = j.at("prior").get<double>();
  if (!m.stub) {
    m.calibration.a = j.at("calibration").at("a").get<double>();
    m.calibration.b = j.at("calibration").at("b").get<double>();
    m.svm = binary_svm_from_json(j.at("svm"));
  }
  return m;
}

nlohmann::ordered_json MultiLabelSvmModel::to_json() const {
  nlohmann::ordered_json j;
  auto& tags = j["tags"] = nlohmann::ordered_json::array();
  for (const auto& t : tags_) tags.push_back(t.value);
  j["imputer"] = {{"k", imputer_.k}, {"fallback", imputer_.fallback}, {"donors", linnaeus::to_json(imputer_.donors)}};
  auto constant = nlohmann::ordered_json::array();
  for (bool b : scaler_.constant) constant.push_back(b);
  j["scaler"] = {{"mean", scaler_.mean}, {"std", scaler_.stddev}, {"constant", constant}};
  auto& models = j["models"] = nlohmann::ordered_json::array();
  for (const auto& m : models_) models.push_back(linnaeus::to_json(m));
  return j;
}

MultiLabelSvmModel MultiLabelSvmModel::from_json(const nlohmann::json& j) {
  try {
    MultiLabelSvmModel m;
    for (const auto& t : j.at("tags")) m.tags_.emplace_back(t.get<std::string>());
    const auto& imp = j.at("imputer");
    m.imputer_.k = imp.at("k").get<std::size_t>();
    m.imputer_.fallback = imp.at("fallback").get<double>();
    m.imputer_.donors = matrix_from_json(imp.at("donors"));
    const auto& sc = j.at("scaler");
    m.scaler_.mean = sc.at("mean").get<std::vector<double>>();
    m.scaler_.stddev = sc.at("std").get<std::vector<double>>();
    m.scaler_.constant = sc.at("constant").get<std::vector<bool>>();
    for (const auto& t : j.at("models")) m.models_.push_back(tag_model_from_json(t));
    if (m.models_.size() != m.tags_.size()) throw DataError("svm model: tag/model count mismatch");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("svm model: ") + e.what());
  }
}

}  // namespace linnaeus
