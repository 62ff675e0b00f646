#include "sppiv/pod.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <iomanip>

#include "sppiv/binary_io.hpp"
#include "sppiv/error.hpp"

namespace sppiv {

std::pair<PodBasis, ModeSeries> compute_pod(const SnapshotMatrix& x, int r) {
  const int max_rank = static_cast<int>(std::min(x.data.rows(), x.data.cols()));
  require(r >= 1 && r <= max_rank, ErrorCode::RankOutOfRange,
          "rank " + std::to_string(r) + " outside [1, " + std::to_string(max_rank) + "]");
  const double energy = x.data.squaredNorm();
  require(energy > 0.0, ErrorCode::DegenerateData, "snapshot matrix is identically zero (rank 0)");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x.data, Eigen::ComputeThinU);
  PodBasis basis;
  basis.modes = svd.matrixU().leftCols(r);
  basis.sigma = svd.singularValues().head(r);
  basis.sigma_full_sq_sum = energy;
  basis.grid = x.grid;
  basis.mean_field = x.mean_field;

  for (int k = 0; k < r; ++k) {
    Eigen::Index at = 0;
    basis.modes.col(k).cwiseAbs().maxCoeff(&at);
    if (basis.modes(at, k) < 0.0) basis.modes.col(k) *= -1.0;
  }

  ModeSeries z{basis.modes.transpose() * x.data, x.dt};
  return {std::move(basis), std::move(z)};
}

PodBasis truncate(const PodBasis& basis, int r) {
  require(r >= 1 && r <= basis.rank(), ErrorCode::RankOutOfRange, "truncation rank out of range");
  PodBasis out = basis;
  out.modes = basis.modes.leftCols(r);
  out.sigma = basis.sigma.head(r);
  return out;
}

VelocityField reconstruct(const PodBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& z, bool with_mean) {
  require(z.size() == basis.rank(), ErrorCode::DimensionMismatch, "coefficient vector length != r");
  Eigen::VectorXd x = basis.modes * z;
  if (with_mean) x += basis.mean_field.stacked();
  return VelocityField::unstack(basis.grid, x);
}

ModeSeries project(const PodBasis& basis, const SnapshotMatrix& x) {
  require(same_grid(basis.grid, x.grid), ErrorCode::GridMismatch, "projection onto a basis from another grid");
  return ModeSeries{basis.modes.transpose() * x.data, x.dt};
}

double energy_ratio(const PodBasis& basis, int r) {
  require(r >= 1 && r <= basis.rank(), ErrorCode::RankOutOfRange, "energy ratio rank out of range");
  return std::min(1.0, basis.sigma.head(r).squaredNorm() / basis.sigma_full_sq_sum);
}

namespace {
constexpr std::string_view kPodMagic = "SPPIVPOD";
constexpr std::uint32_t kPodVersion = 1;
}  // namespace

void save_basis(std::ostream& os, const PodBasis& b) {
  io::Writer w(os);
  w.magic(kPodMagic);
  w.u32(kPodVersion);
  w.u32(static_cast<std::uint32_t>(b.rank()));
  write_grid_block(w, *b.grid);
  w.f64s({b.modes.data(), static_cast<std::size_t>(b.modes.size())});
  w.f64s({b.sigma.data(), static_cast<std::size_t>(b.sigma.size())});
  w.f64(b.sigma_full_sq_sum);
  const Eigen::VectorXd mean = b.mean_field.stacked();
  w.f64s({mean.data(), static_cast<std::size_t>(mean.size())});
}

PodBasis load_basis(std::istream& is) {
  io::Reader r(is);
  r.expect_magic(kPodMagic);
  r.expect_version(kPodVersion);
  const auto rank = static_cast<Eigen::Index>(r.u32());
  PodBasis b;
  b.grid = read_grid_block(r);
  const Eigen::Index rows = 2 * b.grid->n_active();
  require(rank >= 1 && rank <= rows, ErrorCode::DimensionMismatch, "basis rank inconsistent with grid");
  const std::size_t body = static_cast<std::size_t>((rows * rank + rank + 1 + rows) * 8);
  if (r.remaining() < body) fail(ErrorCode::CorruptContainer, "corrupt container: truncated basis payload");
  if (r.remaining() > body) fail(ErrorCode::DimensionMismatch, "basis payload larger than header dimensions");
  b.modes.resize(rows, rank);
  r.f64s({b.modes.data(), static_cast<std::size_t>(b.modes.size())});
  b.sigma.resize(rank);
  r.f64s({b.sigma.data(), static_cast<std::size_t>(rank)});
  b.sigma_full_sq_sum = r.f64();
  Eigen::VectorXd mean(rows);
  r.f64s({mean.data(), static_cast<std::size_t>(rows)});
  io::check_finite({b.modes.data(), static_cast<std::size_t>(b.modes.size())}, "modes");
  io::check_finite({b.sigma.data(), static_cast<std::size_t>(rank)}, "sigma");
  io::check_finite(std::array{b.sigma_full_sq_sum}, "energy");
  b.mean_field = VelocityField::unstack(b.grid, mean);
  return b;
}

void save_basis(const std::filesystem::path& path, const PodBasis& basis) {
  auto os = io::open_out(path);
  save_basis(os, basis);
}

PodBasis load_basis(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  return load_basis(is);
}

void write_spectrum_csv(std::ostream& os, const PodBasis& b) {
  os << "mode,sigma,energy,cumulative_energy_ratio\n" << std::setprecision(17);
  double cum = 0.0;
  for (int k = 0; k < b.rank(); ++k) {
    const double e = b.sigma[k] * b.sigma[k];
    cum += e;
    os << (k + 1) << ',' << b.sigma[k] << ',' << e / b.sigma_full_sq_sum << ','
       << std::min(1.0, cum / b.sigma_full_sq_sum) << '\n';
  }
}

}  // namespace sppiv
