#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "linnaeus/eval.hpp"
#include "linnaeus/features.hpp"
#include "linnaeus/taxonomy.hpp"

namespace linnaeus {

/// Dense row-major matrix. Missing cells are NaN.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  void append_row(std::span<const double> values);
  Matrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// exp(-gamma * |x - y|^2). Throws on dimension mismatch or gamma <= 0.
double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);
double linear_kernel(std::span<const double> x, std::span<const double> y);

enum class KernelKind { linear, rbf };

struct Kernel {
  KernelKind kind = KernelKind::rbf;
  double gamma = 1.0;
  double operator()(std::span<const double> x, std::span<const double> y) const;
};

// ---------------------------------------------------------------------------
// Preprocessing

struct ImputationModel {
  std::size_t k = 5;
  Matrix donors;  // training rows, NaN where unobserved
  double fallback = 0.0;
};

ImputationModel fit_imputer(const Matrix& x, std::size_t k = 5);
/// Fills NaN cells with the mean of that feature over the k nearest donors observing it.
/// Distance is Euclidean over mutually observed features, rescaled by observed fraction.
Matrix impute(const ImputationModel& model, const Matrix& x);

struct ScalingModel {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
  std::vector<bool> constant;
};

ScalingModel fit_scaler(const Matrix& x);
Matrix scale(const ScalingModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// Binary soft-margin SVM

struct SolverOptions {
  double tolerance = 1e-3;
  std::size_t max_iterations = 0;  // 0: max(1e6, 100 n)
};

struct DualSolution {
  std::vector<double> alpha;
  double rho = 0.0;
  std::size_t iterations = 0;
};

/// SMO with second-order working-set selection. Labels are +1 / -1.
/// Throws InternalError when the iteration cap is hit.
DualSolution solve_dual(const Matrix& x, std::span<const int> y, const Kernel& kernel, double c,
                        const SolverOptions& options = {});

struct BinarySvm {
  Kernel kernel;
  double c = 1.0;
  Matrix support_vectors;
  std::vector<double> coef;  // alpha_i * y_i
  double rho = 0.0;

  double decision(std::span<const double> x) const;
};

BinarySvm train_binary(const Matrix& x, std::span<const int> y, const Kernel& kernel, double c,
                       const SolverOptions& options = {});

/// P(y=1 | f) = 1 / (1 + exp(a f + b)); a <= 0 keeps it non-decreasing in f.
struct Calibration {
  double a = 0.0;
  double b = 0.0;
  double operator()(double decision) const;
};

/// Platt sigmoid fit with the Newton/backtracking method of Lin, Lin and Weng.
Calibration fit_platt(std::span<const double> decisions, std::span<const int> y);

/// One calibrated classifier per tag, or a constant-prior stub when the tag cannot be learned.
struct TagModel {
  TagId tag;
  bool stub = false;
  double prior = 0.0;
  BinarySvm svm;
  Calibration calibration;

  double probability(std::span<const double> x) const;
};

struct SvmOptions {
  KernelKind kernel = KernelKind::rbf;
  SolverOptions solver;
  std::size_t calibration_folds = 3;
  std::size_t impute_k = 5;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Fits one tag: internal out-of-fold decision values drive the calibration, then a
/// final machine is trained on all rows. `x` must already be imputed and scaled.
TagModel fit_tag_model(const TagId& tag, const Matrix& x, std::span<const int> y, const Hyperparameters& params,
                       const SvmOptions& options);

class MultiLabelSvmModel {
 public:
  const std::vector<TagId>& tags() const noexcept { return tags_; }
  const std::vector<TagModel>& models() const noexcept { return models_; }
  const ImputationModel& imputer() const noexcept { return imputer_; }
  const ScalingModel& scaler() const noexcept { return scaler_; }
  std::size_t dimension() const noexcept { return scaler_.mean.size(); }

  /// Rows x tags of calibrated probabilities for raw (unimputed, unscaled) feature rows.
  Matrix predict_proba(const Matrix& raw) const;

  nlohmann::ordered_json to_json() const;
  static MultiLabelSvmModel from_json(const nlohmann::json& j);

  friend MultiLabelSvmModel fit_multilabel_svm(const Matrix& raw, const std::vector<TagSet>& labels,
                                               std::span<const TagId> tags, std::span<const Hyperparameters> params,
                                               const SvmOptions& options);

 private:
  std::vector<TagId> tags_;
  ImputationModel imputer_;
  ScalingModel scaler_;
  std::vector<TagModel> models_;
};

/// `params` holds one entry per tag, or a single entry shared by all tags.
MultiLabelSvmModel fit_multilabel_svm(const Matrix& raw, const std::vector<TagSet>& labels,
                                      std::span<const TagId> tags, std::span<const Hyperparameters> params,
                                      const SvmOptions& options);

/// C in {0.1, 1, 10, 100} crossed with gamma in {1/d, 0.01, 0.1, 1}.
std::vector<Hyperparameters> default_grid(std::size_t dimension);

nlohmann::ordered_json to_json(const BinarySvm& m);
BinarySvm binary_svm_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TagModel& m);
TagModel tag_model_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace linnaeus
