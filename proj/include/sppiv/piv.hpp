#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "sppiv/flowdata.hpp"
#include "sppiv/sensors.hpp"

namespace sppiv {

/// Row-major intensity image; pixel (x, y) covers [x, x+1) x [y, y+1).
struct ParticleImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;
  double t = 0.0;

  ParticleImage() = default;
  ParticleImage(int w, int h, double t_ = 0.0);

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct ImagePair {
  ParticleImage a;
  ParticleImage b;
  double dt_pair = 0.0;
};

struct PivConfig {
  int window = 32;
  double overlap = 0.75;
  double px_per_length = 1.0;
  int search = 0;    // displacement clamp in px; 0 means window / 2
  int margin_x = 0;  // first window origin
  int margin_y = 0;

  int stride() const;
  int clamp() const { return search > 0 ? search : window / 2; }
  void validate() const;
};

/// Window tiling of an image: grid cell (ix, iy) is the window whose
/// top-left pixel is (margin_x + ix*stride, margin_y + iy*stride).
struct WindowLayout {
  int nx = 0, ny = 0;
  int stride = 0;
  int window = 0;
  int margin_x = 0, margin_y = 0;
  double px_per_length = 1.0;

  int origin_x(int ix) const { return margin_x + ix * stride; }
  int origin_y(int iy) const { return margin_y + iy * stride; }
  /// Physical position of grid point (0, 0) (window centre).
  double x0() const { return (margin_x + 0.5 * window) / px_per_length; }
  double y0() const { return (margin_y + 0.5 * window) / px_per_length; }
  double spacing() const { return stride / px_per_length; }
};

WindowLayout make_layout(int width, int height, const PivConfig& cfg);
/// Grid matching the layout; `mask` (nx*ny, row-major) may be empty.
GridPtr make_grid(const WindowLayout& layout, std::vector<bool> mask = {});

enum VectorFlag : std::uint8_t {
  kVectorOk = 0,
  kBlankWindow = 1,
  kBorderPeak = 2,
  kParabolicFallback = 4,
  kOutsideClamp = 8,
  kSubstituted = 16,
};

struct PeakEstimate {
  double dx = 0.0;
  double dy = 0.0;
  std::uint8_t flags = kVectorOk;

  bool valid() const { return (flags & (kBlankWindow | kBorderPeak | kOutsideClamp)) == 0; }
};

/// FFT cross-correlation of square n x n blocks.
///
/// Blocks are mean-subtracted, the circular correlation
/// c(d) = sum_x a(x) b(x + d) is computed through forward transforms, a
/// conjugate product and an inverse transform, and the map is returned with
/// zero displacement at index (n/2, n/2).
class CrossCorrelator {
 public:
  explicit CrossCorrelator(int n);
  ~CrossCorrelator();
  CrossCorrelator(const CrossCorrelator&) = delete;
  CrossCorrelator& operator=(const CrossCorrelator&) = delete;

  int size() const { return n_; }

  /// Loads the two windows with top-left corners (x, y) from the images.
  /// Returns false when either window is blank (zero variance).
  bool load(const ParticleImage& a, const ParticleImage& b, int x, int y);
  /// Loads explicit row-major blocks.
  bool load(const double* a, const double* b);

  /// Correlation map for the loaded blocks (n*n, row-major, dy rows).
  const std::vector<double>& correlate();

 private:
  bool finish_load();

  int n_;
  double* in_a_ = nullptr;
  double* in_b_ = nullptr;
  std::complex<double>* spec_a_ = nullptr;
  std::complex<double>* spec_b_ = nullptr;
  double* out_ = nullptr;
  void* plan_a_ = nullptr;
  void* plan_b_ = nullptr;
  void* plan_inv_ = nullptr;
  std::vector<double> map_;
};

/// Convenience wrapper: correlation map of two n x n row-major blocks.
std::vector<double> cross_correlate(const std::vector<double>& a, const std::vector<double>& b, int n);

/// Integer argmax of the map followed by a 3-point Gaussian fit per axis.
/// Displacements are in pixels relative to the map centre.
PeakEstimate subpixel_peak(const std::vector<double>& map, int n, int clamp);
/// Fit around a given integer peak (map indices).
PeakEstimate subpixel_peak(const std::vector<double>& map, int n, int peak_x, int peak_y, int clamp);

/// Per-window displacement with the shared processing used by both paths.
PeakEstimate window_displacement(CrossCorrelator& xc, const ParticleImage& a, const ParticleImage& b, int x, int y,
                                 int clamp);

/// Sparse processing at the selected points, with hold-last-valid
/// substitution per channel. Allocation-free after construction.
class SparsePiv {
 public:
  SparsePiv(const PivConfig& cfg, const WindowLayout& layout, const Grid& grid, const std::vector<int>& cells);

  /// Observation vector (u, v per point, selection order) in velocity units.
  const Eigen::VectorXd& process(const ImagePair& pair) { return process(pair.a, pair.b, pair.dt_pair); }
  const Eigen::VectorXd& process(const ParticleImage& a, const ParticleImage& b, double dt_pair);
  const std::vector<std::uint8_t>& flags() const { return flags_; }
  int invalid_count() const { return invalid_; }
  int points() const { return static_cast<int>(origins_.size()); }

 private:
  PivConfig cfg_;
  CrossCorrelator xc_;
  std::vector<std::pair<int, int>> origins_;
  Eigen::VectorXd y_;
  Eigen::VectorXd last_valid_;
  std::vector<bool> have_valid_;
  std::vector<std::uint8_t> flags_;
  int invalid_ = 0;
};

Eigen::VectorXd sparse_piv(const ImagePair& pair, const SensorSet& sensors, const WindowLayout& layout,
                           const PivConfig& cfg);

struct FullPivResult {
  VelocityField field;
  std::vector<std::uint8_t> flags;  // per active point
  int invalid = 0;
};

/// Every unmasked grid point; invalid vectors are replaced by the median of
/// valid 8-neighbours (or zero) and flagged.
FullPivResult full_piv(const ImagePair& pair, const GridPtr& grid, const WindowLayout& layout, const PivConfig& cfg);

/// 16-bit binary PGM (P5, maxval 65535). Values are rounded and clamped.
void write_pgm(const std::filesystem::path& path, const ParticleImage& img);
ParticleImage read_pgm(const std::filesystem::path& path);

}  // namespace sppiv
