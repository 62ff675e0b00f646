#pragma once

#include <Eigen/Dense>
#include <span>

namespace sppiv {

/// ||Z_ref - Z_hat||_F / ||Z_ref||_F.
double error_epsilon(const Eigen::MatrixXd& z_ref, const Eigen::MatrixXd& z_hat);

/// ||Z_ref - Z_hat||_F normalised by the variation of Z_ref about its
/// per-mode temporal mean.
double error_offset_normalized(const Eigen::MatrixXd& z_ref, const Eigen::MatrixXd& z_hat);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n < 2
  int n = 0;
};

MeanStd mean_std(std::span<const double> xs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace sppiv
