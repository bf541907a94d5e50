#include "refusal/embedstore.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <future>
#include <map>
#include <random>
#include <sstream>

namespace refusal {

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, RowMatrix<float> vectors)
    : ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows()) {
    fail(ErrorKind::DimMismatch, std::to_string(ids_.size()) + " ids for " + std::to_string(vectors_.rows()) + " vectors");
  }
  if (!vectors_.allFinite()) fail(ErrorKind::NonFiniteInput, "embedding matrix contains NaN or inf");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) fail(ErrorKind::Parse, "duplicate embedding id " + ids_[i]);
  }
}

std::optional<std::size_t> EmbeddingMatrix::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingMatrix::index_of(const std::string& id) const {
  auto i = find(id);
  if (!i) fail(ErrorKind::MissingVector, "no embedding for id '" + id + "'");
  return *i;
}

RowMatrix<float> EmbeddingMatrix::gather(std::span<const std::string> ids) const {
  RowMatrix<float> out(static_cast<Eigen::Index>(ids.size()), dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = vectors_.row(static_cast<Eigen::Index>(index_of(ids[i])));
  }
  return out;
}

std::vector<Candidate> candidates_above(const EmbeddingMatrix& matrix, const Vector<double>& center,
                                        const std::unordered_set<std::string>& exclude, double threshold) {
  if (center.size() != matrix.dim()) {
    fail(ErrorKind::DimMismatch, "center has " + std::to_string(center.size()) + " entries, matrix dim is " + std::to_string(matrix.dim()));
  }
  const double center_norm = center.norm();
  if (center_norm == 0.0) fail(ErrorKind::ZeroVector, "search center is the zero vector");

  const RowMatrix<double> x = matrix.vectors().cast<double>();
  const Vector<double> dots = x * center;
  const Vector<double> norms = x.rowwise().norm();

  std::vector<Candidate> out;
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (norms(r) == 0.0) continue;
    const auto& id = matrix.ids()[i];
    if (exclude.count(id)) continue;
    const double sim = std::clamp(dots(r) / (norms(r) * center_norm), -1.0, 1.0);
    if (sim > threshold) out.push_back({id, sim});
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  return out;
}

std::vector<Candidate> top_candidates(const EmbeddingMatrix& matrix, const Vector<double>& center,
                                      const std::unordered_set<std::string>& exclude, double threshold,
                                      std::size_t n) {
  auto out = candidates_above(matrix, center, exclude, threshold);
  if (out.size() > n) out.resize(n);
  return out;
}

namespace {

// Power iteration for the dominant direction of Xc^T Xc, kept orthogonal
// to `against` when given.
Vector<double> dominant_direction(const RowMatrix<double>& xc, const Vector<double>* against,
                                  std::mt19937_64& rng, const PcaOptions& opt) {
  const Eigen::Index d = xc.cols();
  std::normal_distribution<double> gauss;
  Vector<double> v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = gauss(rng);
  auto orthonormalize = [&](Vector<double>& u) {
    if (against) u -= against->dot(u) * (*against);
    const double n = u.norm();
    if (n > 0.0) u /= n;
    return n;
  };
  orthonormalize(v);
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector<double> next = xc.transpose() * (xc * v);
    if (orthonormalize(next) == 0.0) break;  // no variance left in this subspace
    // Fix the sign so convergence is measured on direction, not orientation.
    if (next.dot(v) < 0.0) next = -next;
    const double delta = (next - v).norm();
    v = std::move(next);
    if (delta < opt.tolerance) break;
  }
  return v;
}

}  // namespace

Projection2D pca_2d(const RowMatrix<float>& rows, const PcaOptions& options) {
  const Eigen::Index d = rows.cols();
  if (d < 2) fail(ErrorKind::DimMismatch, "PCA to 2D needs at least 2 dimensions");
  RowMatrix<double> xc = rows.cast<double>();
  if (xc.rows() > 0) xc.rowwise() -= xc.colwise().mean();

  std::mt19937_64 rng(options.seed);
  const Vector<double> first = dominant_direction(xc, nullptr, rng, options);
  const Vector<double> second = dominant_direction(xc, &first, rng, options);

  Projection2D p;
  p.directions.resize(2, d);
  p.directions.row(0) = first.transpose();
  p.directions.row(1) = second.transpose();
  p.coords = xc * p.directions.transpose();
  return p;
}

std::vector<int> grid_cells(const RowMatrix<double>& coords, int grid) {
  if (grid < 1) fail(ErrorKind::InvalidArgument, "grid size must be at least 1");
  std::vector<int> cells(static_cast<std::size_t>(coords.rows()), 0);
  if (coords.rows() == 0) return cells;
  constexpr double kPad = 1e-9;
  const Eigen::RowVector2d lo = coords.colwise().minCoeff();
  const Eigen::RowVector2d hi = coords.colwise().maxCoeff();
  const Eigen::RowVector2d span = (hi - lo).array() + kPad;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    std::array<int, 2> c{};
    for (int axis = 0; axis < 2; ++axis) {
      const double t = (coords(i, axis) - lo(axis)) / span(axis);
      c[static_cast<std::size_t>(axis)] = std::clamp(static_cast<int>(t * grid), 0, grid - 1);
    }
    cells[static_cast<std::size_t>(i)] = c[1] * grid + c[0];
  }
  return cells;
}

std::vector<std::string> diversity_sample(const EmbeddingMatrix& matrix, std::size_t k,
                                          const DiversityOptions& options,
                                          const RowMatrix<double>* projection) {
  if (options.grid < 1) fail(ErrorKind::InvalidArgument, "grid size must be at least 1");
  if (k > matrix.size()) {
    fail(ErrorKind::InvalidArgument, "asked for " + std::to_string(k) + " ids from " + std::to_string(matrix.size()));
  }
  RowMatrix<double> coords;
  if (projection) {
    if (projection->rows() != static_cast<Eigen::Index>(matrix.size()) || projection->cols() != 2) {
      fail(ErrorKind::BadProjection, "projection has " + std::to_string(projection->rows()) + " rows for " + std::to_string(matrix.size()) + " ids");
    }
    coords = *projection;
  } else {
    coords = pca_2d(matrix.vectors(), PcaOptions{.seed = options.seed}).coords;
  }

  const auto cells = grid_cells(coords, options.grid);
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < cells.size(); ++i) members[cells[i]].push_back(i);

  std::mt19937_64 rng(options.seed);
  std::vector<std::vector<std::size_t>> queues;
  for (auto& [cell, idx] : members) {
    std::shuffle(idx.begin(), idx.end(), rng);
    queues.push_back(std::move(idx));
  }

  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t round = 0; out.size() < k; ++round) {
    for (const auto& q : queues) {
      if (out.size() == k) break;
      if (round < q.size()) out.push_back(matrix.ids()[q[round]]);
    }
  }
  return out;
}

RowMatrix<double> load_projection(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::unordered_map<std::string, std::pair<double, double>> points;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string id;
    double x = 0, y = 0;
    if (!(ls >> id >> x >> y)) fail(ErrorKind::BadProjection, "malformed projection line: " + line);
    points[id] = {x, y};
  }
  if (points.size() != ids.size()) {
    fail(ErrorKind::BadProjection, std::to_string(points.size()) + " projected points for " + std::to_string(ids.size()) + " ids");
  }
  RowMatrix<double> coords(static_cast<Eigen::Index>(ids.size()), 2);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = points.find(ids[i]);
    if (it == points.end()) fail(ErrorKind::BadProjection, "no projected point for " + ids[i]);
    coords(static_cast<Eigen::Index>(i), 0) = it->second.first;
    coords(static_cast<Eigen::Index>(i), 1) = it->second.second;
  }
  return coords;
}

std::filesystem::path ids_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".ids");
  return p;
}

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  std::string out = "EMB1";
  put_u32(out, static_cast<std::uint32_t>(matrix.dim()));
  put_u32(out, static_cast<std::uint32_t>(matrix.size()));
  out.reserve(out.size() + 4 * matrix.size() * static_cast<std::size_t>(matrix.dim()));
  const auto& v = matrix.vectors();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) put_f32(out, v(r, c));
  }
  write_text_file(path, out);
  std::string ids;
  for (const auto& id : matrix.ids()) ids += id + "\n";
  write_text_file(ids_sidecar(path), ids);
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "EMB1") != 0) fail(ErrorKind::Parse, path.string() + ": not an EMB1 file");
  std::size_t pos = 4;
  const std::uint32_t dim = get_u32(bytes, pos);
  const std::uint32_t count = get_u32(bytes, pos);
  if (bytes.size() != 12 + 4ull * dim * count) {
    fail(ErrorKind::Parse, path.string() + ": expected " + std::to_string(count) + "x" + std::to_string(dim) + " floats");
  }
  RowMatrix<float> v(count, dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) v(r, c) = get_f32(bytes, pos);
  }
  std::vector<std::string> ids;
  std::istringstream in(read_text_file(ids_sidecar(path)));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  if (ids.size() != count) {
    fail(ErrorKind::Parse, ids_sidecar(path).string() + ": " + std::to_string(ids.size()) + " ids for " + std::to_string(count) + " rows");
  }
  return EmbeddingMatrix(std::move(ids), std::move(v));
}

std::vector<std::vector<float>> FileEmbeddingProvider::embed(std::span<const std::string> ids,
                                                             std::span<const std::string> /*texts*/) {
  std::vector<std::vector<float>> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto row = matrix_.row(matrix_.index_of(id));
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

EmbeddingMatrix embed_batch(std::span<const std::string> ids, std::span<const std::string> texts,
                            EmbeddingProvider& provider, const ProviderConfig& config) {
  if (ids.empty()) fail(ErrorKind::EmptySet, "nothing to embed");
  if (ids.size() != texts.size()) fail(ErrorKind::LengthMismatch, "ids and texts differ in length");
  if (config.batch_size < 1) fail(ErrorKind::InvalidArgument, "batch_size must be at least 1");
  const std::size_t parallel = std::max<std::size_t>(1, config.max_parallel_requests);

  std::vector<std::pair<std::size_t, std::size_t>> batches;
  for (std::size_t b = 0; b < ids.size(); b += config.batch_size) {
    batches.emplace_back(b, std::min(ids.size(), b + config.batch_size));
  }
  std::vector<std::vector<std::vector<float>>> results(batches.size());
  for (std::size_t wave = 0; wave < batches.size(); wave += parallel) {
    std::vector<std::future<std::vector<std::vector<float>>>> inflight;
    const std::size_t end = std::min(batches.size(), wave + parallel);
    for (std::size_t b = wave; b < end; ++b) {
      const auto [lo, hi] = batches[b];
      inflight.push_back(std::async(std::launch::async, [&, lo = lo, hi = hi] {
        return provider.embed(ids.subspan(lo, hi - lo), texts.subspan(lo, hi - lo));
      }));
    }
    for (std::size_t b = wave; b < end; ++b) results[b] = inflight[b - wave].get();
  }

  std::optional<std::size_t> dim;
  RowMatrix<float> v;
  std::size_t row = 0;
  for (const auto& batch : results) {
    for (const auto& vec : batch) {
      if (!dim) {
        dim = vec.size();
        v.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(*dim));
      } else if (vec.size() != *dim) {
        fail(ErrorKind::DimMismatch, "provider returned dimension " + std::to_string(vec.size()) + " after " + std::to_string(*dim));
      }
      for (std::size_t c = 0; c < vec.size(); ++c) v(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = vec[c];
      ++row;
    }
  }
  if (row != ids.size()) fail(ErrorKind::Provider, "provider returned " + std::to_string(row) + " vectors for " + std::to_string(ids.size()) + " texts");
  return EmbeddingMatrix(std::vector<std::string>(ids.begin(), ids.end()), std::move(v));
}

}  // namespace refusal
