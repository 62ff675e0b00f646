#include "sppiv/rom.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <iomanip>

#include "sppiv/binary_io.hpp"
#include "sppiv/error.hpp"
#include "sppiv/linalg.hpp"

namespace sppiv {

namespace {

void check_segments(std::span<const Segment> segments, int n) {
  for (const auto& s : segments) {
    require(s.first >= 0 && s.count >= 0 && s.first + s.count <= n, ErrorCode::InvalidArgument,
            "segment outside the series");
  }
}

int transitions(std::span<const Segment> segments) {
  int m = 0;
  for (const auto& s : segments) m += std::max(0, s.count - 1);
  return m;
}

/// Z_{m-1} and Z_m with the segment-internal transitions as columns.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> shifted_pairs(const Eigen::MatrixXd& z,
                                                          std::span<const Segment> segments) {
  const int m = transitions(segments);
  Eigen::MatrixXd prev(z.rows(), m), next(z.rows(), m);
  int at = 0;
  for (const auto& s : segments) {
    if (s.count < 2) continue;
    prev.middleCols(at, s.count - 1) = z.middleCols(s.first, s.count - 1);
    next.middleCols(at, s.count - 1) = z.middleCols(s.first + 1, s.count - 1);
    at += s.count - 1;
  }
  return {std::move(prev), std::move(next)};
}

}  // namespace

SystemFit fit_system(const ModeSeries& z, std::span<const Segment> segments) {
  check_segments(segments, z.steps());
  const int m = transitions(segments);
  require(m >= 1, ErrorCode::InsufficientData, "system fit needs at least 2 consecutive snapshots");
  auto [prev, next] = shifted_pairs(z.Z, segments);

  SystemFit fit;
  fit.F = next * pseudo_inverse(prev, 1e-12, &fit.numerical_rank);
  fit.underdetermined = m < z.rank();
  fit.spectral_radius = spectral_radius(fit.F);
  return fit;
}

SystemFit fit_system(const ModeSeries& z) {
  const std::array seg{Segment{0, z.steps()}};
  return fit_system(z, seg);
}

Eigen::MatrixXd fit_system_matrix(const ModeSeries& z) { return fit_system(z).F; }

std::pair<Eigen::VectorXd, Eigen::VectorXd> estimate_noise(const ModeSeries& z, const Eigen::MatrixXd& y,
                                                           const Eigen::MatrixXd& F, const Eigen::MatrixXd& C,
                                                           std::span<const Segment> segments) {
  const int r = z.rank();
  require(F.rows() == r && F.cols() == r, ErrorCode::DimensionMismatch, "F is not r x r");
  require(C.cols() == r, ErrorCode::DimensionMismatch, "C column count != r");
  require(y.rows() == C.rows() && y.cols() == z.steps(), ErrorCode::DimensionMismatch,
          "observation series shape does not match C rows x N");
  check_segments(segments, z.steps());

  const int m = transitions(segments);
  require(m >= 1, ErrorCode::InsufficientData, "noise estimate needs at least one transition");
  auto [prev, next] = shifted_pairs(z.Z, segments);
  const Eigen::MatrixXd v = next - F * prev;
  Eigen::VectorXd q = v.rowwise().squaredNorm() / static_cast<double>(m);

  int samples = 0;
  Eigen::VectorXd r_acc = Eigen::VectorXd::Zero(C.rows());
  for (const auto& s : segments) {
    const Eigen::MatrixXd w = y.middleCols(s.first, s.count) - C * z.Z.middleCols(s.first, s.count);
    r_acc += w.rowwise().squaredNorm();
    samples += s.count;
  }
  return {std::move(q), r_acc / static_cast<double>(samples)};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> estimate_noise(const ModeSeries& z, const Eigen::MatrixXd& y,
                                                           const Eigen::MatrixXd& F, const Eigen::MatrixXd& C) {
  const std::array seg{Segment{0, z.steps()}};
  return estimate_noise(z, y, F, C, seg);
}

namespace {
constexpr std::string_view kRomMagic = "SPPIVROM";
constexpr std::uint32_t kRomVersion = 1;
}  // namespace

void save_rom(std::ostream& os, const LinearRom& rom) {
  io::Writer w(os);
  w.magic(kRomMagic);
  w.u32(kRomVersion);
  w.u32(static_cast<std::uint32_t>(rom.rank()));
  w.u32(static_cast<std::uint32_t>(rom.points()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = rom.F;
  w.f64s({f.data(), static_cast<std::size_t>(f.size())});
  w.f64s({rom.Q.data(), static_cast<std::size_t>(rom.Q.size())});
  w.f64s({rom.R.data(), static_cast<std::size_t>(rom.R.size())});
}

LinearRom load_rom(std::istream& is) {
  io::Reader rd(is);
  rd.expect_magic(kRomMagic);
  rd.expect_version(kRomVersion);
  const auto r = static_cast<Eigen::Index>(rd.u32());
  const auto p = static_cast<Eigen::Index>(rd.u32());
  require(r >= 1 && r < (1 << 16) && p < (1 << 24), ErrorCode::DimensionMismatch, "implausible model dimensions");
  const std::size_t body = static_cast<std::size_t>((r * r + r + 2 * p) * 8);
  if (rd.remaining() < body) fail(ErrorCode::CorruptContainer, "corrupt container: truncated model payload");
  if (rd.remaining() > body) fail(ErrorCode::DimensionMismatch, "model payload larger than header dimensions");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(r, r);
  rd.f64s({f.data(), static_cast<std::size_t>(f.size())});
  LinearRom rom{f, Eigen::VectorXd(r), Eigen::VectorXd(2 * p)};
  rd.f64s({rom.Q.data(), static_cast<std::size_t>(r)});
  rd.f64s({rom.R.data(), static_cast<std::size_t>(2 * p)});
  io::check_finite({rom.F.data(), static_cast<std::size_t>(rom.F.size())}, "F");
  io::check_finite({rom.Q.data(), static_cast<std::size_t>(r)}, "Q");
  io::check_finite({rom.R.data(), static_cast<std::size_t>(2 * p)}, "R");
  require((rom.Q.array() >= 0.0).all() && (rom.R.array() >= 0.0).all(), ErrorCode::CorruptContainer,
          "corrupt container: negative noise variance");
  return rom;
}

void save_rom(const std::filesystem::path& path, const LinearRom& rom) {
  auto os = io::open_out(path);
  save_rom(os, rom);
}

LinearRom load_rom(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  return load_rom(is);
}

void write_eigen_csv(std::ostream& os, const Eigen::MatrixXd& F) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(F, false);
  std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
  std::stable_sort(ev.begin(), ev.end(), [](auto a, auto b) { return std::abs(a) > std::abs(b); });
  os << "index,real,imag,modulus\n" << std::setprecision(17);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    os << i + 1 << ',' << ev[i].real() << ',' << ev[i].imag() << ',' << std::abs(ev[i]) << '\n';
  }
}

}  // namespace sppiv
