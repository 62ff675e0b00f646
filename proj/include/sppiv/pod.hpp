#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <utility>

#include "sppiv/flowdata.hpp"

namespace sppiv {

/// Truncated POD basis of a mean-removed snapshot ensemble.
struct PodBasis {
  Eigen::MatrixXd modes;  // 2 n_active x r, orthonormal columns
  Eigen::VectorXd sigma;  // r singular values, descending
  double sigma_full_sq_sum = 0.0;  // ||X||_F^2 of the training matrix
  GridPtr grid;
  VelocityField mean_field;

  int rank() const { return static_cast<int>(modes.cols()); }
};

/// Mode-coefficient time series, one r-vector per snapshot.
struct ModeSeries {
  Eigen::MatrixXd Z;  // r x N
  double dt = 0.0;

  int rank() const { return static_cast<int>(Z.rows()); }
  int steps() const { return static_cast<int>(Z.cols()); }
};

/// Economy SVD of the centred snapshots, truncated to `r` modes.
///
/// Each mode is sign-normalised so that its entry of largest magnitude is
/// positive; Z = U_r^T X carries the matching sign.
std::pair<PodBasis, ModeSeries> compute_pod(const SnapshotMatrix& x, int r);

/// Keeps the leading `r` modes of an existing basis.
PodBasis truncate(const PodBasis& basis, int r);

VelocityField reconstruct(const PodBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& z, bool with_mean);

/// Z = U_r^T X. The caller is responsible for centring X with the training mean.
ModeSeries project(const PodBasis& basis, const SnapshotMatrix& x);

/// Fraction of training energy captured by the leading `r` modes.
double energy_ratio(const PodBasis& basis, int r);

// Basis container ("SPPIVPOD", version 1).
void save_basis(std::ostream& os, const PodBasis& basis);
PodBasis load_basis(std::istream& is);
void save_basis(const std::filesystem::path& path, const PodBasis& basis);
PodBasis load_basis(const std::filesystem::path& path);

/// CSV: mode,sigma,energy,cumulative_energy_ratio.
void write_spectrum_csv(std::ostream& os, const PodBasis& basis);

}  // namespace sppiv
