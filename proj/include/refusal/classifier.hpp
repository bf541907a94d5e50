#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "refusal/embedstore.hpp"
#include "refusal/errors.hpp"
#include "refusal/io.hpp"
#include "refusal/taxonomy.hpp"

namespace refusal {

/// Numerically stable softmax: exp(z - max z) / sum.
template <typename Derived>
Vector<double> softmax(const Eigen::MatrixBase<Derived>& logits) {
  const Vector<double> z = logits.template cast<double>();
  const Vector<double> e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

/// log(sum(exp(z))) without overflow.
template <typename Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& logits) {
  const Vector<double> z = logits.template cast<double>();
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

/// Weights and biases of a multinomial logistic regression, one row per class.
template <typename Scalar>
struct LogRegParams {
  RowMatrix<Scalar> W;
  Vector<Scalar> b;

  Eigen::Index classes() const { return W.rows(); }
  Eigen::Index dim() const { return W.cols(); }

  template <typename To>
  LogRegParams<To> cast() const {
    return {W.template cast<To>(), b.template cast<To>()};
  }
};

/// Stored model: float32 parameters plus the class id of every row.
struct LogRegModel {
  CategoryUniverse classes;
  LogRegParams<float> params;

  Eigen::Index dim() const { return params.dim(); }
  std::size_t num_classes() const { return classes.size(); }
};

LogRegModel zero_model(CategoryUniverse classes, Eigen::Index dim);

/// softmax(W x + b). Throws DimMismatch or NonFiniteInput.
Vector<double> predict_proba(const LogRegModel& model, const Eigen::Ref<const Vector<double>>& x);
/// Row-wise probabilities for a batch.
RowMatrix<double> predict_proba_batch(const LogRegModel& model, const RowMatrix<float>& X);

/// Class id with the highest probability; ties go to the lowest id.
int argmax_category(const CategoryUniverse& classes, const Eigen::Ref<const Vector<double>>& probs);

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 50;
  std::size_t batch_size = 256;
  double l2 = 1e-4;
  std::uint64_t seed = 42;
};

struct TrainResult {
  LogRegModel model;
  std::vector<double> epoch_loss;  // objective on the full set; [0] is before training
};

/// Mean cross-entropy of `labels` (row indices into the class list) plus
/// (l2/2)||W||^2. Fills the gradient when `grad` is not null.
double softmax_objective(const LogRegParams<double>& params, const RowMatrix<double>& X,
                         std::span<const int> label_index, double l2, LogRegParams<double>* grad = nullptr);

/// Mini-batch gradient descent. Labels are category ids from `classes`.
/// Throws ClassMissing when a class has no example, Divergence when the
/// objective stops being finite or explodes.
TrainResult train(const RowMatrix<float>& X, std::span<const int> labels, const CategoryUniverse& classes,
                  const TrainConfig& config);

/// Label ids mapped to row indices of `classes`; throws UnknownCategory.
std::vector<int> label_indices(const CategoryUniverse& classes, std::span<const int> labels);

struct GradCheckOptions {
  std::size_t parameters = 20;
  double step = 1e-5;
  double l2 = 0.0;
  std::uint64_t seed = 7;
};

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) over
/// randomly chosen parameters, using central differences.
double grad_check(const LogRegParams<double>& params, const RowMatrix<double>& X, std::span<const int> label_index,
                  const GradCheckOptions& options = {});

/// Binary cross-entropy summed over samples; predictions are clamped to
/// [1e-12, 1 - 1e-12]. Throws LengthMismatch.
double bce_refusal_loss(std::span<const int> decisions, std::span<const double> predictions);

/// Sum of per-entry binary cross-entropies. Throws ShapeMismatch.
double multilabel_bce_loss(const Eigen::Ref<const RowMatrix<double>>& validity,
                           const Eigen::Ref<const RowMatrix<double>>& predictions);

/// "LRG1", u32 d, u32 classes, i32 class ids, float32 W row-major, float32 b.
void save_model(const LogRegModel& model, const std::filesystem::path& path);
/// Throws ParseError on malformed files and DimMismatch when `expected`
/// is given and names different classes.
LogRegModel load_model(const std::filesystem::path& path, const CategoryUniverse* expected = nullptr);

struct PredictionRecord {
  std::string sample_id;
  std::string model_id;
  std::vector<double> probs;
  int category = 0;
};

json to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const json& j);

std::vector<PredictionRecord> classify(const LogRegModel& model, const std::string& model_id,
                                       const EmbeddingMatrix& embeddings, std::span<const std::string> ids);

}  // namespace refusal
