#include "sppiv/piv.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <mutex>
#include <string>

#include "sppiv/error.hpp"

namespace sppiv {

namespace {
// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

ParticleImage::ParticleImage(int w, int h, double t_)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0f), t(t_) {
  require(w > 0 && h > 0, ErrorCode::InvalidArgument, "image dimensions must be positive");
}

int PivConfig::stride() const {
  return std::max(1, static_cast<int>(std::lround(window * (1.0 - overlap))));
}

void PivConfig::validate() const {
  require(window >= 4 && (window & (window - 1)) == 0, ErrorCode::InvalidArgument,
          "interrogation window must be a power of two >= 4");
  require(overlap >= 0.0 && overlap < 1.0, ErrorCode::InvalidArgument, "overlap must be in [0, 1)");
  require(std::isfinite(px_per_length) && px_per_length > 0.0, ErrorCode::InvalidArgument,
          "px_per_length must be positive");
  require(search >= 0 && search <= window / 2, ErrorCode::InvalidArgument, "search clamp must be in [0, window/2]");
  require(margin_x >= 0 && margin_y >= 0, ErrorCode::InvalidArgument, "margins must be non-negative");
}

WindowLayout make_layout(int width, int height, const PivConfig& cfg) {
  cfg.validate();
  const int s = cfg.stride();
  const int ux = width - 2 * cfg.margin_x - cfg.window;
  const int uy = height - 2 * cfg.margin_y - cfg.window;
  require(ux >= 0 && uy >= 0, ErrorCode::InvalidArgument, "image too small for one interrogation window");
  return WindowLayout{ux / s + 1, uy / s + 1, s, cfg.window, cfg.margin_x, cfg.margin_y, cfg.px_per_length};
}

GridPtr make_grid(const WindowLayout& layout, std::vector<bool> mask) {
  return std::make_shared<const Grid>(layout.nx, layout.ny, layout.spacing(), layout.spacing(), std::move(mask));
}

// ---------------------------------------------------------------------------

CrossCorrelator::CrossCorrelator(int n) : n_(n), map_(static_cast<std::size_t>(n) * n) {
  require(n >= 4 && (n & (n - 1)) == 0, ErrorCode::InvalidArgument, "correlation block must be a power of two");
  const std::size_t real = static_cast<std::size_t>(n) * n;
  const std::size_t cplx = static_cast<std::size_t>(n) * (n / 2 + 1);
  std::lock_guard lock(fftw_planner_mutex());
  in_a_ = fftw_alloc_real(real);
  in_b_ = fftw_alloc_real(real);
  out_ = fftw_alloc_real(real);
  spec_a_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(cplx));
  spec_b_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(cplx));
  auto* sa = reinterpret_cast<fftw_complex*>(spec_a_);
  auto* sb = reinterpret_cast<fftw_complex*>(spec_b_);
  plan_a_ = fftw_plan_dft_r2c_2d(n, n, in_a_, sa, FFTW_ESTIMATE);
  plan_b_ = fftw_plan_dft_r2c_2d(n, n, in_b_, sb, FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_c2r_2d(n, n, sa, out_, FFTW_ESTIMATE);
}

CrossCorrelator::~CrossCorrelator() {
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_a_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_b_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  fftw_free(in_a_);
  fftw_free(in_b_);
  fftw_free(out_);
  fftw_free(spec_a_);
  fftw_free(spec_b_);
}

bool CrossCorrelator::finish_load() {
  const std::size_t m = static_cast<std::size_t>(n_) * n_;
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mean_a += in_a_[i];
    mean_b += in_b_[i];
  }
  mean_a /= static_cast<double>(m);
  mean_b /= static_cast<double>(m);
  double var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    in_a_[i] -= mean_a;
    in_b_[i] -= mean_b;
    var_a += in_a_[i] * in_a_[i];
    var_b += in_b_[i] * in_b_[i];
  }
  return var_a > 0.0 && var_b > 0.0;
}

bool CrossCorrelator::load(const ParticleImage& a, const ParticleImage& b, int x, int y) {
  for (int j = 0; j < n_; ++j) {
    const float* ra = &a.pixels[static_cast<std::size_t>(y + j) * a.width + x];
    const float* rb = &b.pixels[static_cast<std::size_t>(y + j) * b.width + x];
    double* da = in_a_ + static_cast<std::size_t>(j) * n_;
    double* db = in_b_ + static_cast<std::size_t>(j) * n_;
    for (int i = 0; i < n_; ++i) {
      da[i] = ra[i];
      db[i] = rb[i];
    }
  }
  return finish_load();
}

bool CrossCorrelator::load(const double* a, const double* b) {
  std::copy(a, a + static_cast<std::ptrdiff_t>(n_) * n_, in_a_);
  std::copy(b, b + static_cast<std::ptrdiff_t>(n_) * n_, in_b_);
  return finish_load();
}

const std::vector<double>& CrossCorrelator::correlate() {
  fftw_execute(static_cast<fftw_plan>(plan_a_));
  fftw_execute(static_cast<fftw_plan>(plan_b_));
  // conj(A) * B with the 1/n^2 inverse-transform scale folded in; written
  // out by hand since std::complex multiplication goes through the
  // NaN-recovering library routine.
  const double norm = 1.0 / (static_cast<double>(n_) * n_);
  const std::size_t cplx = static_cast<std::size_t>(n_) * (n_ / 2 + 1);
  double* sa = reinterpret_cast<double*>(spec_a_);
  const double* sb = reinterpret_cast<const double*>(spec_b_);
  for (std::size_t k = 0; k < 2 * cplx; k += 2) {
    const double ar = sa[k], ai = sa[k + 1], br = sb[k], bi = sb[k + 1];
    sa[k] = (ar * br + ai * bi) * norm;
    sa[k + 1] = (ar * bi - ai * br) * norm;
  }
  fftw_execute(static_cast<fftw_plan>(plan_inv_));

  // Quadrant swap so zero displacement lands at (n/2, n/2).
  const std::size_t half = static_cast<std::size_t>(n_ / 2);
  const std::size_t n = static_cast<std::size_t>(n_);
  for (std::size_t j = 0; j < n; ++j) {
    const double* src = out_ + j * n;
    double* dst = map_.data() + ((j + half) % n) * n;
    std::copy(src, src + (n - half), dst + half);
    std::copy(src + (n - half), src + n, dst);
  }
  return map_;
}

std::vector<double> cross_correlate(const std::vector<double>& a, const std::vector<double>& b, int n) {
  require(a.size() == static_cast<std::size_t>(n) * n && b.size() == a.size(), ErrorCode::DimensionMismatch,
          "correlation blocks must both be n x n");
  CrossCorrelator xc(n);
  if (!xc.load(a.data(), b.data())) fail(ErrorCode::InvalidVector, "blank correlation window");
  return xc.correlate();
}

// ---------------------------------------------------------------------------

namespace {

/// Offset of the extremum of three samples, Gaussian fit with a parabolic
/// fallback when a sample is non-positive.
double three_point(double lo, double mid, double hi, std::uint8_t& flags) {
  if (lo > 0.0 && mid > 0.0 && hi > 0.0) {
    const double l = std::log(lo), m = std::log(mid), h = std::log(hi);
    const double den = 2.0 * l - 4.0 * m + 2.0 * h;
    return den != 0.0 ? (l - h) / den : 0.0;
  }
  flags |= kParabolicFallback;
  const double den = 2.0 * (lo - 2.0 * mid + hi);
  return den != 0.0 ? (lo - hi) / den : 0.0;
}

}  // namespace

PeakEstimate subpixel_peak(const std::vector<double>& map, int n, int px, int py, int clamp) {
  PeakEstimate est;
  const int half = n / 2;
  est.dx = px - half;
  est.dy = py - half;
  if (std::abs(px - half) > clamp || std::abs(py - half) > clamp) est.flags |= kOutsideClamp;
  if (px <= 0 || py <= 0 || px >= n - 1 || py >= n - 1) {
    est.flags |= kBorderPeak;
    return est;
  }
  auto at = [&](int x, int y) { return map[static_cast<std::size_t>(y) * n + x]; };
  const double m0 = at(px, py);
  est.dx += three_point(at(px - 1, py), m0, at(px + 1, py), est.flags);
  est.dy += three_point(at(px, py - 1), m0, at(px, py + 1), est.flags);
  return est;
}

PeakEstimate subpixel_peak(const std::vector<double>& map, int n, int clamp) {
  const auto it = std::max_element(map.begin(), map.end());
  const int idx = static_cast<int>(it - map.begin());
  return subpixel_peak(map, n, idx % n, idx / n, clamp);
}

PeakEstimate window_displacement(CrossCorrelator& xc, const ParticleImage& a, const ParticleImage& b, int x, int y,
                                 int clamp) {
  if (!xc.load(a, b, x, y)) return PeakEstimate{0.0, 0.0, kBlankWindow};
  return subpixel_peak(xc.correlate(), xc.size(), clamp);
}

namespace {

void check_pair(const ParticleImage& a, const ParticleImage& b, double dt_pair) {
  require(a.width == b.width && a.height == b.height, ErrorCode::DimensionMismatch,
          "image pair frames differ in size");
  require(dt_pair > 0.0, ErrorCode::InvalidArgument, "pair interval must be positive");
}

}  // namespace

SparsePiv::SparsePiv(const PivConfig& cfg, const WindowLayout& layout, const Grid& grid,
                     const std::vector<int>& cells)
    : cfg_(cfg),
      xc_(cfg.window),
      y_(2 * static_cast<Eigen::Index>(cells.size())),
      last_valid_(Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(cells.size()))),
      have_valid_(2 * cells.size(), false),
      flags_(cells.size(), kVectorOk) {
  cfg.validate();
  require(grid.nx() == layout.nx && grid.ny() == layout.ny, ErrorCode::GridMismatch,
          "grid does not match the window layout");
  for (int cell : cells) {
    require(cell >= 0 && cell < grid.size() && !grid.masked(cell), ErrorCode::InvalidArgument,
            "processing point is masked or outside the grid");
    origins_.emplace_back(layout.origin_x(cell % grid.nx()), layout.origin_y(cell / grid.nx()));
  }
}

const Eigen::VectorXd& SparsePiv::process(const ParticleImage& a, const ParticleImage& b, double dt_pair) {
  check_pair(a, b, dt_pair);
  const double to_velocity = 1.0 / (cfg_.px_per_length * dt_pair);
  invalid_ = 0;
  for (std::size_t k = 0; k < origins_.size(); ++k) {
    const auto [x, y] = origins_[k];
    require(x + cfg_.window <= a.width && y + cfg_.window <= a.height, ErrorCode::InvalidArgument,
            "processing window extends outside the image");
    const PeakEstimate est = window_displacement(xc_, a, b, x, y, cfg_.clamp());
    flags_[k] = est.flags;
    const auto iu = static_cast<Eigen::Index>(2 * k), iv = iu + 1;
    if (est.valid()) {
      y_[iu] = est.dx * to_velocity;
      y_[iv] = est.dy * to_velocity;
      last_valid_[iu] = y_[iu];
      last_valid_[iv] = y_[iv];
      have_valid_[2 * k] = have_valid_[2 * k + 1] = true;
    } else {
      y_[iu] = last_valid_[iu];
      y_[iv] = last_valid_[iv];
      flags_[k] |= kSubstituted;
      ++invalid_;
    }
  }
  if (!origins_.empty() && invalid_ == static_cast<int>(origins_.size())) {
    fail(ErrorCode::InvalidVector, "every processing window produced an invalid vector");
  }
  return y_;
}

Eigen::VectorXd sparse_piv(const ImagePair& pair, const SensorSet& sensors, const WindowLayout& layout,
                           const PivConfig& cfg) {
  SparsePiv proc(cfg, layout, *sensors.grid, sensors.cells);
  return proc.process(pair);
}

FullPivResult full_piv(const ImagePair& pair, const GridPtr& grid, const WindowLayout& layout, const PivConfig& cfg) {
  check_pair(pair.a, pair.b, pair.dt_pair);
  cfg.validate();
  require(grid->nx() == layout.nx && grid->ny() == layout.ny, ErrorCode::GridMismatch,
          "grid does not match the window layout");
  require(layout.origin_x(layout.nx - 1) + cfg.window <= pair.a.width &&
              layout.origin_y(layout.ny - 1) + cfg.window <= pair.a.height,
          ErrorCode::InvalidArgument, "window layout extends outside the image");

  const int n = grid->n_active();
  const double to_velocity = 1.0 / (cfg.px_per_length * pair.dt_pair);
  CrossCorrelator xc(cfg.window);
  FullPivResult res{VelocityField(grid), std::vector<std::uint8_t>(static_cast<std::size_t>(n)), 0};
  std::vector<bool> valid(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    const PeakEstimate est =
        window_displacement(xc, pair.a, pair.b, layout.origin_x(grid->ix_of(a)), layout.origin_y(grid->iy_of(a)), cfg.clamp());
    res.flags[static_cast<std::size_t>(a)] = est.flags;
    valid[static_cast<std::size_t>(a)] = est.valid();
    res.field.u[a] = est.dx * to_velocity;
    res.field.v[a] = est.dy * to_velocity;
  }

  // Replace invalid vectors from valid neighbours (computed before any
  // replacement so the result does not depend on scan order).
  const Eigen::VectorXd u0 = res.field.u, v0 = res.field.v;
  for (int a = 0; a < n; ++a) {
    if (valid[static_cast<std::size_t>(a)]) continue;
    ++res.invalid;
    res.flags[static_cast<std::size_t>(a)] |= kSubstituted;
    std::vector<double> us, vs;
    const int ix = grid->ix_of(a), iy = grid->iy_of(a);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int jx = ix + dx, jy = iy + dy;
        if ((dx == 0 && dy == 0) || jx < 0 || jy < 0 || jx >= grid->nx() || jy >= grid->ny()) continue;
        const int b = grid->active_of(jy * grid->nx() + jx);
        if (b < 0 || !valid[static_cast<std::size_t>(b)]) continue;
        us.push_back(u0[b]);
        vs.push_back(v0[b]);
      }
    }
    auto median = [](std::vector<double>& s) {
      if (s.empty()) return 0.0;
      std::sort(s.begin(), s.end());
      const std::size_t m = s.size() / 2;
      return s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
    };
    res.field.u[a] = median(us);
    res.field.v[a] = median(vs);
  }
  if (n > 0 && res.invalid == n) fail(ErrorCode::InvalidVector, "every window produced an invalid vector");
  return res;
}

// ---------------------------------------------------------------------------

void write_pgm(const std::filesystem::path& path, const ParticleImage& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  os << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 2);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp(std::round(static_cast<double>(img.at(x, y))), 0.0, 65535.0);
      const auto q = static_cast<std::uint16_t>(v);
      row[2 * static_cast<std::size_t>(x)] = static_cast<unsigned char>(q >> 8);
      row[2 * static_cast<std::size_t>(x) + 1] = static_cast<unsigned char>(q & 0xff);
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) fail(ErrorCode::Io, "failed writing " + path.string());
}

ParticleImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P5") fail(ErrorCode::BadMagic, "not a binary PGM (P5): " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    fail(ErrorCode::CorruptContainer, "malformed PGM header: " + path.string());
  }
  require(w > 0 && h > 0 && maxval > 0 && maxval <= 65535, ErrorCode::CorruptContainer, "bad PGM dimensions");
  const int bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * bpp);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) {
    fail(ErrorCode::CorruptContainer, "truncated PGM payload: " + path.string());
  }
  ParticleImage img(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = bpp == 2 ? static_cast<float>((raw[2 * i] << 8) | raw[2 * i + 1]) : static_cast<float>(raw[i]);
  }
  return img;
}

}  // namespace sppiv
