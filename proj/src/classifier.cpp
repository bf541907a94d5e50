#include "refusal/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace refusal {

namespace {
constexpr double kClamp = 1e-12;
}

LogRegModel zero_model(CategoryUniverse classes, Eigen::Index dim) {
  LogRegModel m;
  const auto k = static_cast<Eigen::Index>(classes.size());
  m.classes = std::move(classes);
  m.params.W = RowMatrix<float>::Zero(k, dim);
  m.params.b = Vector<float>::Zero(k);
  return m;
}

Vector<double> predict_proba(const LogRegModel& model, const Eigen::Ref<const Vector<double>>& x) {
  if (x.size() != model.dim()) {
    fail(ErrorKind::DimMismatch, "input has " + std::to_string(x.size()) + " dims, model expects " + std::to_string(model.dim()));
  }
  if (!x.allFinite()) fail(ErrorKind::NonFiniteInput, "input vector contains NaN or inf");
  const Vector<double> logits = model.params.W.cast<double>() * x + model.params.b.cast<double>();
  return softmax(logits);
}

RowMatrix<double> predict_proba_batch(const LogRegModel& model, const RowMatrix<float>& X) {
  if (X.cols() != model.dim()) {
    fail(ErrorKind::DimMismatch, "inputs have " + std::to_string(X.cols()) + " dims, model expects " + std::to_string(model.dim()));
  }
  RowMatrix<double> out(X.rows(), static_cast<Eigen::Index>(model.num_classes()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out.row(i) = predict_proba(model, X.row(i).transpose().cast<double>()).transpose();
  }
  return out;
}

int argmax_category(const CategoryUniverse& classes, const Eigen::Ref<const Vector<double>>& probs) {
  if (static_cast<std::size_t>(probs.size()) != classes.size() || probs.size() == 0) {
    fail(ErrorKind::DimMismatch, "probability vector does not match the class list");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < classes.size(); ++i) {
    const double p = probs(static_cast<Eigen::Index>(i));
    const double q = probs(static_cast<Eigen::Index>(best));
    if (p > q || (p == q && classes.ids[i] < classes.ids[best])) best = i;
  }
  return classes.ids[best];
}

std::vector<int> label_indices(const CategoryUniverse& classes, std::span<const int> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int id : labels) out.push_back(static_cast<int>(classes.index_of(id)));
  return out;
}

double softmax_objective(const LogRegParams<double>& params, const RowMatrix<double>& X,
                         std::span<const int> label_index, double l2, LogRegParams<double>* grad) {
  const Eigen::Index n = X.rows();
  if (n == 0) fail(ErrorKind::EmptySet, "objective over zero examples");
  if (static_cast<std::size_t>(n) != label_index.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(n) + " rows for " + std::to_string(label_index.size()) + " labels");
  }
  if (X.cols() != params.dim()) fail(ErrorKind::DimMismatch, "inputs do not match model dimension");

  RowMatrix<double> logits = X * params.W.transpose();
  logits.rowwise() += params.b.transpose();

  double loss = 0.0;
  RowMatrix<double> delta(n, params.classes());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = logits.row(i).transpose();
    const int y = label_index[static_cast<std::size_t>(i)];
    loss += log_sum_exp(row) - row(y);
    delta.row(i) = softmax(row).transpose();
    delta(i, y) -= 1.0;
  }
  loss /= static_cast<double>(n);
  loss += 0.5 * l2 * params.W.squaredNorm();

  if (grad) {
    grad->W = delta.transpose() * X / static_cast<double>(n) + l2 * params.W;
    grad->b = delta.colwise().sum().transpose() / static_cast<double>(n);
  }
  return loss;
}

TrainResult train(const RowMatrix<float>& X, std::span<const int> labels, const CategoryUniverse& classes,
                  const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) fail(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (config.epochs < 1) fail(ErrorKind::InvalidArgument, "epochs must be at least 1");
  if (config.batch_size < 1) fail(ErrorKind::InvalidArgument, "batch size must be at least 1");
  if (static_cast<std::size_t>(X.rows()) != labels.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(X.rows()) + " rows for " + std::to_string(labels.size()) + " labels");
  }
  if (!X.allFinite()) fail(ErrorKind::NonFiniteInput, "training inputs contain NaN or inf");
  const auto y = label_indices(classes, labels);
  std::vector<std::size_t> per_class(classes.size(), 0);
  for (int c : y) ++per_class[static_cast<std::size_t>(c)];
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (per_class[c] == 0) {
      fail(ErrorKind::ClassMissing, "no training example for class '" + std::to_string(classes.ids[c]) + "'");
    }
  }

  const RowMatrix<double> Xd = X.cast<double>();
  const auto n = static_cast<std::size_t>(Xd.rows());
  LogRegParams<double> params{RowMatrix<double>::Zero(static_cast<Eigen::Index>(classes.size()), Xd.cols()),
                              Vector<double>::Zero(static_cast<Eigen::Index>(classes.size()))};
  TrainResult result;
  const double initial = softmax_objective(params, Xd, y, config.l2);
  result.epoch_loss.push_back(initial);
  const double blowup = 1e6 * std::max(1.0, initial);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  LogRegParams<double> grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      RowMatrix<double> xb(static_cast<Eigen::Index>(end - start), Xd.cols());
      std::vector<int> yb;
      yb.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = Xd.row(static_cast<Eigen::Index>(order[i]));
        yb.push_back(y[order[i]]);
      }
      softmax_objective(params, xb, yb, config.l2, &grad);
      params.W -= config.learning_rate * grad.W;
      params.b -= config.learning_rate * grad.b;
    }
    const double loss = params.W.allFinite() && params.b.allFinite()
                            ? softmax_objective(params, Xd, y, config.l2)
                            : std::numeric_limits<double>::infinity();
    if (!std::isfinite(loss) || loss > blowup) {
      fail(ErrorKind::Divergence, "objective reached " + std::to_string(loss) + " in epoch " + std::to_string(epoch + 1));
    }
    result.epoch_loss.push_back(loss);
  }
  result.model.classes = classes;
  result.model.params = params.cast<float>();
  return result;
}

double grad_check(const LogRegParams<double>& params, const RowMatrix<double>& X, std::span<const int> label_index,
                  const GradCheckOptions& options) {
  LogRegParams<double> grad;
  softmax_objective(params, X, label_index, options.l2, &grad);

  const Eigen::Index w_count = params.W.size();
  const Eigen::Index total = w_count + params.b.size();
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);

  double worst = 0.0;
  LogRegParams<double> probe = params;
  for (std::size_t k = 0; k < options.parameters; ++k) {
    const Eigen::Index p = pick(rng);
    double* slot = p < w_count ? probe.W.data() + p : probe.b.data() + (p - w_count);
    const double analytic = p < w_count ? grad.W.data()[p] : grad.b.data()[p - w_count];
    const double saved = *slot;
    *slot = saved + options.step;
    const double up = softmax_objective(probe, X, label_index, options.l2);
    *slot = saved - options.step;
    const double down = softmax_objective(probe, X, label_index, options.l2);
    *slot = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

double bce_refusal_loss(std::span<const int> decisions, std::span<const double> predictions) {
  if (decisions.size() != predictions.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(decisions.size()) + " decisions for " +
                                        std::to_string(predictions.size()) + " predictions");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const double r = std::clamp(predictions[i], kClamp, 1.0 - kClamp);
    loss -= decisions[i] ? std::log(r) : std::log(1.0 - r);
  }
  return loss;
}

double multilabel_bce_loss(const Eigen::Ref<const RowMatrix<double>>& validity,
                           const Eigen::Ref<const RowMatrix<double>>& predictions) {
  if (validity.rows() != predictions.rows() || validity.cols() != predictions.cols()) {
    fail(ErrorKind::ShapeMismatch, "validity is " + std::to_string(validity.rows()) + "x" + std::to_string(validity.cols()) +
                                       ", predictions are " + std::to_string(predictions.rows()) + "x" +
                                       std::to_string(predictions.cols()));
  }
  const auto c = predictions.array().max(kClamp).min(1.0 - kClamp);
  const auto& y = validity.array();
  return -(y * c.log() + (1.0 - y) * (1.0 - c).log()).sum();
}

void save_model(const LogRegModel& model, const std::filesystem::path& path) {
  std::string out = "LRG1";
  put_u32(out, static_cast<std::uint32_t>(model.dim()));
  put_u32(out, static_cast<std::uint32_t>(model.num_classes()));
  for (int id : model.classes.ids) put_u32(out, static_cast<std::uint32_t>(id));
  const auto& W = model.params.W;
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) put_f32(out, W(r, c));
  for (Eigen::Index r = 0; r < model.params.b.size(); ++r) put_f32(out, model.params.b(r));
  write_text_file(path, out);
}

LogRegModel load_model(const std::filesystem::path& path, const CategoryUniverse* expected) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "LRG1") != 0) fail(ErrorKind::Parse, path.string() + ": not an LRG1 file");
  std::size_t pos = 4;
  const std::uint32_t d = get_u32(bytes, pos);
  const std::uint32_t k = get_u32(bytes, pos);
  const std::uint64_t want = 12 + 4ull * k + 4ull * k * d + 4ull * k;
  if (bytes.size() != want) {
    fail(ErrorKind::Parse, path.string() + ": expected " + std::to_string(want) + " bytes, found " + std::to_string(bytes.size()));
  }
  LogRegModel m;
  for (std::uint32_t i = 0; i < k; ++i) m.classes.ids.push_back(static_cast<int>(get_u32(bytes, pos)));
  m.classes.includes_not_a_refusal =
      std::find(m.classes.ids.begin(), m.classes.ids.end(), kNotARefusal) != m.classes.ids.end();
  m.params.W.resize(k, d);
  for (std::uint32_t r = 0; r < k; ++r)
    for (std::uint32_t c = 0; c < d; ++c) m.params.W(r, c) = get_f32(bytes, pos);
  m.params.b.resize(k);
  for (std::uint32_t r = 0; r < k; ++r) m.params.b(r) = get_f32(bytes, pos);
  if (!m.params.W.allFinite() || !m.params.b.allFinite()) fail(ErrorKind::Parse, path.string() + ": non-finite parameters");
  if (expected) {
    if (expected->size() != k) {
      fail(ErrorKind::DimMismatch, path.string() + ": model has " + std::to_string(k) + " classes, taxonomy has " +
                                       std::to_string(expected->size()));
    }
    if (expected->ids != m.classes.ids) fail(ErrorKind::DimMismatch, path.string() + ": class ids differ from the taxonomy");
  }
  return m;
}

json to_json(const PredictionRecord& r) {
  return json{{"sample_id", r.sample_id}, {"model_id", r.model_id}, {"probs", r.probs}, {"category", r.category}};
}

PredictionRecord prediction_from_json(const json& j) {
  try {
    PredictionRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.model_id = j.value("model_id", std::string{});
    if (j.contains("probs")) r.probs = j["probs"].get<std::vector<double>>();
    r.category = j.at("category").get<int>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("prediction record: ") + e.what());
  }
}

std::vector<PredictionRecord> classify(const LogRegModel& model, const std::string& model_id,
                                       const EmbeddingMatrix& embeddings, std::span<const std::string> ids) {
  std::vector<PredictionRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const Vector<double> x = embeddings.row(embeddings.index_of(id)).transpose().cast<double>();
    const Vector<double> p = predict_proba(model, x);
    out.push_back({id, model_id, std::vector<double>(p.data(), p.data() + p.size()), argmax_category(model.classes, p)});
  }
  return out;
}

}  // namespace refusal
