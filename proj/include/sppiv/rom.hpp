#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "sppiv/pod.hpp"

namespace sppiv {

/// z_{k+1} = F z_k + v_k,  y_k = C z_k + w_k with diagonal noise variances.
struct LinearRom {
  Eigen::MatrixXd F;  // r x r
  Eigen::VectorXd Q;  // r system-noise variances
  Eigen::VectorXd R;  // 2p observation-noise variances

  int rank() const { return static_cast<int>(F.rows()); }
  int points() const { return static_cast<int>(R.size() / 2); }
};

/// Contiguous run of columns forming one uninterrupted time series.
struct Segment {
  int first = 0;
  int count = 0;
};

struct SystemFit {
  Eigen::MatrixXd F;
  int numerical_rank = 0;     // rank of Z_{m-1} after the SVD cutoff
  bool underdetermined = false;  // fewer transitions than modes
  double spectral_radius = 0.0;
};

/// Least-squares one-step map F = Z_m (Z_{m-1})^+ over the transitions
/// inside each segment (pairs never straddle a segment boundary).
SystemFit fit_system(const ModeSeries& z, std::span<const Segment> segments);
SystemFit fit_system(const ModeSeries& z);

Eigen::MatrixXd fit_system_matrix(const ModeSeries& z);

/// Diagonal residual variances: Q from v_k = z_{k+1} - F z_k averaged over
/// the transitions, R from w_k = y_k - C z_k averaged over all samples.
std::pair<Eigen::VectorXd, Eigen::VectorXd> estimate_noise(const ModeSeries& z, const Eigen::MatrixXd& y,
                                                           const Eigen::MatrixXd& F, const Eigen::MatrixXd& C,
                                                           std::span<const Segment> segments);
std::pair<Eigen::VectorXd, Eigen::VectorXd> estimate_noise(const ModeSeries& z, const Eigen::MatrixXd& y,
                                                           const Eigen::MatrixXd& F, const Eigen::MatrixXd& C);

// Model container ("SPPIVROM", version 1): r, p, F row-major, Q, R.
void save_rom(std::ostream& os, const LinearRom& rom);
LinearRom load_rom(std::istream& is);
void save_rom(const std::filesystem::path& path, const LinearRom& rom);
LinearRom load_rom(const std::filesystem::path& path);

/// CSV: index,real,imag,modulus of the eigenvalues of F, sorted by modulus.
void write_eigen_csv(std::ostream& os, const Eigen::MatrixXd& F);

}  // namespace sppiv
