#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "refusal/errors.hpp"
#include "refusal/provider.hpp"

namespace refusal {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row-per-sample float32 embeddings with an id index.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Throws DimMismatch when the row count differs from ids, and
  /// NonFiniteInput for NaN/inf entries.
  EmbeddingMatrix(std::vector<std::string> ids, RowMatrix<float> vectors);

  Eigen::Index dim() const { return vectors_.cols(); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const RowMatrix<float>& vectors() const { return vectors_; }

  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws MissingVector.
  std::size_t index_of(const std::string& id) const;
  auto row(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)); }

  /// Rows for `ids`, in the given order.
  RowMatrix<float> gather(std::span<const std::string> ids) const;

 private:
  std::vector<std::string> ids_;
  RowMatrix<float> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// dot(a, b) / (|a| |b|), accumulated in double.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::DimMismatch, "cosine similarity of vectors with " + std::to_string(a.size()) +
                                     " and " + std::to_string(b.size()) + " entries");
  }
  const auto ad = a.template cast<double>();
  const auto bd = b.template cast<double>();
  const double na = ad.norm();
  const double nb = bd.norm();
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::ZeroVector, "cosine similarity with a zero vector");
  const double s = ad.cwiseProduct(bd).sum() / (na * nb);
  return std::clamp(s, -1.0, 1.0);
}

/// Mean of the rows, or the weight-normalised mean when weights are given.
/// Throws EmptySet or BadWeights.
template <typename Derived>
Vector<double> representative_vector(const Eigen::MatrixBase<Derived>& rows,
                                     std::span<const double> weights = {}) {
  if (rows.rows() == 0) fail(ErrorKind::EmptySet, "representative vector of zero rows");
  const auto rd = rows.template cast<double>();
  if (weights.empty()) return rd.colwise().mean().transpose();
  if (static_cast<Eigen::Index>(weights.size()) != rows.rows()) {
    fail(ErrorKind::BadWeights, std::to_string(weights.size()) + " weights for " + std::to_string(rows.rows()) + " rows");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::BadWeights, "weights must be finite and nonnegative");
    total += w;
  }
  if (total <= 0.0) fail(ErrorKind::BadWeights, "weights sum to zero");
  const Eigen::Map<const Vector<double>> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return (rd.transpose() * w) / total;
}

struct Candidate {
  std::string id;
  double similarity = 0.0;
};

/// Ids outside `exclude` whose similarity to `center` exceeds `threshold`,
/// most similar first (ties by ascending id), at most `n` of them.
std::vector<Candidate> top_candidates(const EmbeddingMatrix& matrix, const Vector<double>& center,
                                      const std::unordered_set<std::string>& exclude, double threshold,
                                      std::size_t n);

/// Every candidate above threshold, sorted like top_candidates but untruncated.
std::vector<Candidate> candidates_above(const EmbeddingMatrix& matrix, const Vector<double>& center,
                                        const std::unordered_set<std::string>& exclude, double threshold);

struct Projection2D {
  RowMatrix<double> coords;      // n x 2
  RowMatrix<double> directions;  // 2 x d, orthonormal rows
};

struct PcaOptions {
  int max_iterations = 200;
  double tolerance = 1e-9;
  std::uint64_t seed = 42;
};

/// Top-two principal directions by power iteration with deflation; the
/// covariance is never formed.
Projection2D pca_2d(const RowMatrix<float>& rows, const PcaOptions& options = {});

struct DiversityOptions {
  int grid = 10;
  std::uint64_t seed = 42;
};

/// Buckets points on a g x g grid over their 2D bounding box and takes one
/// id per nonempty cell in turn until `k` are selected. `projection` must
/// have one row per id when given; otherwise PCA is used.
std::vector<std::string> diversity_sample(const EmbeddingMatrix& matrix, std::size_t k,
                                          const DiversityOptions& options,
                                          const RowMatrix<double>* projection = nullptr);

/// Grid cell index (row-major) of every point; exposed for tests.
std::vector<int> grid_cells(const RowMatrix<double>& coords, int grid);

/// Lines of "id x y"; returns coordinates ordered like `ids`. Throws
/// BadProjection on missing or extra ids.
RowMatrix<double> load_projection(const std::filesystem::path& path, const std::vector<std::string>& ids);

/// embeddings.bin ("EMB1", u32 dim, u32 count, little-endian float32 rows)
/// plus the `.ids` sidecar.
void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
std::filesystem::path ids_sidecar(const std::filesystem::path& path);

enum class ProviderMode { file, http };

struct ProviderConfig {
  ProviderMode mode = ProviderMode::file;
  std::size_t batch_size = 64;
  std::size_t max_parallel_requests = 4;
};

/// Serves vectors from a stored matrix by id.
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(EmbeddingMatrix matrix) : matrix_(std::move(matrix)) {}
  std::vector<std::vector<float>> embed(std::span<const std::string> ids,
                                        std::span<const std::string> texts) override;

 private:
  EmbeddingMatrix matrix_;
};

/// Embeds texts in batches with bounded concurrency. Throws DimMismatch when
/// the provider returns vectors of differing length.
EmbeddingMatrix embed_batch(std::span<const std::string> ids, std::span<const std::string> texts,
                            EmbeddingProvider& provider, const ProviderConfig& config);

}  // namespace refusal
