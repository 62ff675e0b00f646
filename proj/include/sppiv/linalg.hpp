#pragma once

#include <Eigen/Dense>

namespace sppiv {

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// `rel_cutoff * sigma_max` are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::Ref<const Eigen::MatrixXd>& a, double rel_cutoff = 1e-12,
                               int* numerical_rank = nullptr);

double spectral_radius(const Eigen::Ref<const Eigen::MatrixXd>& a);

}  // namespace sppiv
