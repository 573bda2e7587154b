#include <limits>
#include <random>
#include <string>

#include "hpm/error.hpp"
#include "hpm/kernels.hpp"
#include "hpm/learning.hpp"

namespace hpm {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::span<const double> row(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

RowMatrix plus_plus_seeds(const RowMatrix& pts, int k, std::mt19937_64& rng) {
  const Eigen::Index n = pts.rows();
  RowMatrix centers(k, pts.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  centers.row(0) = pts.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      d2[j] = std::min(d2[j], kernels::squared_distance(row(pts, j), row(centers, c - 1)));
      total += d2[j];
    }
    Eigen::Index chosen = pick(rng);
    if (total > 0.0) {
      const double target = unif(rng) * total;
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        acc += d2[j];
        if (acc > target) {
          chosen = j;
          break;
        }
      }
    }
    centers.row(c) = pts.row(chosen);
  }
  return centers;
}

// Moves the farthest member of the largest cluster into each empty cluster.
void refill_empty(const RowMatrix& pts, RowMatrix& centers, std::vector<int>& assign, std::vector<int>& sizes) {
  const int k = static_cast<int>(sizes.size());
  for (int c = 0; c < k; ++c) {
    if (sizes[c] > 0) continue;
    int largest = 0;
    for (int q = 1; q < k; ++q)
      if (sizes[q] > sizes[largest]) largest = q;
    if (sizes[largest] < 2) fail(ErrorKind::EmptyCluster, "cannot refill empty cluster " + std::to_string(c));
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index j = 0; j < pts.rows(); ++j) {
      if (assign[j] != largest) continue;
      const double d = kernels::squared_distance(row(pts, j), row(centers, largest));
      if (d > far_d) {
        far_d = d;
        far = j;
      }
    }
    assign[far] = c;
    --sizes[largest];
    sizes[c] = 1;
    centers.row(c) = pts.row(far);
  }
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, int restarts, std::uint64_t seed, int max_iters) {
  if (k < 1) fail(ErrorKind::InvalidArgument, "k-means needs k >= 1");
  if (restarts < 1) fail(ErrorKind::InvalidArgument, "k-means needs at least one restart");
  const Eigen::Index n = points.rows();
  if (n < k) fail(ErrorKind::TooFewSamples, std::to_string(n) + " samples for " + std::to_string(k) + " clusters");
  const RowMatrix pts = points;
  std::mt19937_64 rng(seed);

  KMeansResult best;
  best.distortion = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    RowMatrix centers = plus_plus_seeds(pts, k, rng);
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    std::vector<int> sizes(k, 0);
    for (int it = 0; it < max_iters; ++it) {
      bool changed = false;
      std::fill(sizes.begin(), sizes.end(), 0);
      for (Eigen::Index j = 0; j < n; ++j) {
        int arg = 0;
        double bd = kernels::squared_distance(row(pts, j), row(centers, 0));
        for (int c = 1; c < k; ++c) {
          const double d = kernels::squared_distance(row(pts, j), row(centers, c));
          if (d < bd) {
            bd = d;
            arg = c;
          }
        }
        changed |= assign[j] != arg;
        assign[j] = arg;
        ++sizes[arg];
      }
      refill_empty(pts, centers, assign, sizes);
      RowMatrix sums = RowMatrix::Zero(k, pts.cols());
      for (Eigen::Index j = 0; j < n; ++j)
        kernels::axpy(1.0, row(pts, j), {sums.data() + assign[j] * pts.cols(), static_cast<std::size_t>(pts.cols())});
      for (int c = 0; c < k; ++c) centers.row(c) = sums.row(c) / static_cast<double>(sizes[c]);
      if (!changed) break;
    }
    double distortion = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) distortion += kernels::squared_distance(row(pts, j), row(centers, assign[j]));
    if (distortion < best.distortion) {
      best.distortion = distortion;
      best.assignment = assign;
      best.centers = centers;
    }
  }
  return best;
}

}  // namespace hpm
