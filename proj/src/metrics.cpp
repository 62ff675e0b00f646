#include "sppiv/metrics.hpp"

#include <cmath>

#include "sppiv/error.hpp"

namespace sppiv {

double error_epsilon(const Eigen::MatrixXd& z_ref, const Eigen::MatrixXd& z_hat) {
  require(z_ref.rows() == z_hat.rows() && z_ref.cols() == z_hat.cols(), ErrorCode::DimensionMismatch,
          "reference and estimate differ in shape");
  const double den = z_ref.norm();
  require(den > 0.0, ErrorCode::DegenerateData, "reference mode series has zero norm");
  return (z_ref - z_hat).norm() / den;
}

double error_offset_normalized(const Eigen::MatrixXd& z_ref, const Eigen::MatrixXd& z_hat) {
  require(z_ref.rows() == z_hat.rows() && z_ref.cols() == z_hat.cols(), ErrorCode::DimensionMismatch,
          "reference and estimate differ in shape");
  const Eigen::VectorXd mean = z_ref.rowwise().mean();
  const double den = (z_ref.colwise() - mean).norm();
  require(den > 0.0, ErrorCode::DegenerateData, "reference mode series has no temporal variation");
  return (z_ref - z_hat).norm() / den;
}

MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  out.n = static_cast<int>(xs.size());
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::InvalidArgument, "line fit needs >= 2 paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorCode::DegenerateData, "line fit needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

}  // namespace sppiv
