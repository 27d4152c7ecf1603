#include "tla/numerics.hpp"

namespace tla {

namespace {

// Nearest centroid per row; ties go to the lowest centroid index.
void assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels,
            Vector& distances) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = (points.row(i) - centroids.row(0)).squaredNorm();
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    distances[i] = best_d;
  }
}

// Moves the farthest point into each empty cluster until none is empty.
void repair_empty(const Matrix& points, Matrix& centroids, std::vector<int>& labels,
                  Vector& distances) {
  const int k = static_cast<int>(centroids.rows());
  for (;;) {
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    const auto empty = std::find(counts.begin(), counts.end(), 0);
    if (empty == counts.end()) return;
    const int cluster = static_cast<int>(empty - counts.begin());
    Eigen::Index far = -1;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      if (counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] < 2) continue;
      if (far < 0 || distances[i] > distances[far]) far = i;
    }
    if (far < 0) throw Error("kmeans: cannot fill empty cluster");
    labels[static_cast<std::size_t>(far)] = cluster;
    distances[far] = 0.0;
    centroids.row(cluster) = points.row(far);
  }
}

}  // namespace

std::vector<int> kmeans(const Matrix& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw Error("kmeans: k must be at least 1");
  if (k > n) throw Error("kmeans: k exceeds number of points");
  if (!points.allFinite()) throw Error("kmeans: non-finite points");

  std::mt19937_64 rng(seed);
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Vector nearest = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (nearest[i] <= 0.0) continue;
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
      while (nearest[pick] <= 0.0) --pick;
    }
    centroids.row(c) = points.row(pick);
    nearest = nearest.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  Vector distances(n);
  constexpr int kMaxIterations = 100;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const std::vector<int> previous = labels;
    assign(points, centroids, labels, distances);
    repair_empty(points, centroids, labels, distances);
    if (iter > 0 && labels == previous) break;
    Matrix sums = Matrix::Zero(k, points.cols());
    Vector counts = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      counts[labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c) centroids.row(c) = sums.row(c) / counts[c];
  }
  return labels;
}

}  // namespace tla
