#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sppiv/flowdata.hpp"
#include "sppiv/pod.hpp"

namespace testutil {

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Eigen::MatrixXd random_orthonormal(int rows, int cols, std::uint64_t seed) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rows, cols, seed));
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

/// Snapshot matrix on an nx x ny grid holding `data` as fluctuations.
inline sppiv::SnapshotMatrix snapshots_from(const Eigen::MatrixXd& data, int nx, int ny, double dt = 1.0) {
  auto g = std::make_shared<const sppiv::Grid>(nx, ny, 1.0, 1.0);
  sppiv::SnapshotMatrix x{g, data, sppiv::VelocityField(g), dt};
  return x;
}

/// Stable rotation-like block-diagonal matrix with the given radius.
inline Eigen::MatrixXd stable_rotation(int r, double radius, std::uint64_t seed) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(r, r);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0.1, 1.2);
  int i = 0;
  for (; i + 1 < r; i += 2) {
    const double a = ang(rng);
    f(i, i) = radius * std::cos(a);
    f(i, i + 1) = -radius * std::sin(a);
    f(i + 1, i) = radius * std::sin(a);
    f(i + 1, i + 1) = radius * std::cos(a);
  }
  if (i < r) f(i, i) = radius;
  return f;
}

/// Direct-sum circular correlation c(d) = sum_x a(x) b(x + d) of mean-free
/// blocks, laid out with zero displacement at (n/2, n/2).
inline std::vector<double> brute_correlation(std::vector<double> a, std::vector<double> b, int n) {
  double ma = 0, mb = 0;
  for (int i = 0; i < n * n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n * n;
  mb /= n * n;
  for (int i = 0; i < n * n; ++i) {
    a[i] -= ma;
    b[i] -= mb;
  }
  std::vector<double> c(static_cast<std::size_t>(n * n), 0.0);
  for (int dy = -n / 2; dy < n - n / 2; ++dy) {
    for (int dx = -n / 2; dx < n - n / 2; ++dx) {
      double s = 0;
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const int xb = ((x + dx) % n + n) % n;
          const int yb = ((y + dy) % n + n) % n;
          s += a[y * n + x] * b[yb * n + xb];
        }
      c[(dy + n / 2) * n + (dx + n / 2)] = s;
    }
  }
  return c;
}

}  // namespace testutil
