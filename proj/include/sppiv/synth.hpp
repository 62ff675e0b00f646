#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sppiv/flowdata.hpp"
#include "sppiv/piv.hpp"

namespace sppiv {

enum class FlowKind { Uniform, ShearLayer, VortexStreet };

FlowKind flow_kind_from_string(const std::string& s);
const char* to_string(FlowKind k);

/// Analytic unsteady flow used as ground truth. Physical units throughout
/// (the defaults read as metres and seconds); y grows with image row.
struct FlowSpec {
  FlowKind kind = FlowKind::ShearLayer;
  double U_inf = 10.0;
  double theta = 0.0;  // regime parameter shifting the shear layer

  // Shear layer: u = U_inf tanh((y - y0(theta)) / delta(theta)) plus a
  // streamfunction perturbation of `harmonics` travelling waves.
  double y0 = 0.010;
  double delta = 0.002;
  double y0_per_theta = 0.0008;
  double delta_per_theta = 0.08;  // relative growth of delta per unit theta
  int harmonics = 4;
  double amplitude = 0.12;  // first-harmonic velocity scale / U_inf
  double amplitude_decay = 0.72;
  double envelope = 0.003;  // Gaussian half-width of the perturbation in y
  double wavelength = 0.040;
  double frequency = 50.0;
  double frequency_exponent = 0.8;  // f_h = frequency * h^exponent

  // Vortex street: two staggered rows of Gaussian-streamfunction vortices.
  double street_spacing = 0.016;
  double street_offset = 0.003;
  double vortex_core = 0.002;
  double vortex_strength = 0.004;  // streamfunction peak, m^2/s
  double convection = 0.6;         // convection speed / U_inf

  std::uint64_t seed = 1;  // harmonic phases

  void validate() const;
};

struct Velocity {
  double u = 0.0, v = 0.0;
};

struct VelocityGradient {
  double dudx = 0.0, dudy = 0.0, dvdx = 0.0, dvdy = 0.0;
};

/// Evaluator with the per-spec tables (harmonic phases) precomputed.
class AnalyticFlow {
 public:
  struct Harmonic {
    double amp, k, omega, phase;
  };

  explicit AnalyticFlow(FlowSpec spec);

  Velocity velocity(double x, double y, double t) const;
  VelocityGradient gradient(double x, double y, double t) const;
  const FlowSpec& spec() const { return spec_; }

 private:
  static std::vector<Harmonic> harmonics_of(const FlowSpec& s);

  FlowSpec spec_;
  std::vector<Harmonic> harmonics_;
};

Velocity velocity_at(const FlowSpec& spec, double x, double y, double t);
VelocityGradient velocity_gradient_at(const FlowSpec& spec, double x, double y, double t);

/// Ground truth on the active grid points; point (ix, iy) sits at
/// (x0 + ix dx, y0 + iy dy).
std::vector<VelocityField> sample_fields(const FlowSpec& spec, const GridPtr& grid, std::span<const double> times,
                                         double x0 = 0.0, double y0 = 0.0);
std::vector<VelocityField> sample_fields(const AnalyticFlow& flow, const GridPtr& grid, std::span<const double> times,
                                         double x0 = 0.0, double y0 = 0.0);

struct Particle {
  double x = 0.0, y = 0.0;  // physical position
  double diameter = 2.5;    // image diameter (e^-2), px
  double intensity = 1.0;   // peak value
};

struct RenderConfig {
  int width = 256;
  int height = 128;
  double px_per_length = 6250.0;
  double particles_per_px = 0.012;  // ~12 per 32x32 window
  double diameter_mean = 2.8;
  double diameter_std = 0.3;
  double intensity_mean = 2000.0;
  double intensity_std = 300.0;
  double background = 100.0;
  double noise_sigma = 10.0;
  double margin_px = 8.0;  // seeding margin outside the frame
};

/// Seeding state; particles that leave the seeding region re-enter on the
/// opposite side with fresh random size and brightness.
struct ParticleEnsemble {
  std::vector<Particle> particles;
  std::mt19937_64 rng;
};

ParticleEnsemble seed_particles(const RenderConfig& cfg, std::uint64_t seed);

/// One RK4 step of the analytic velocity for a single position.
void rk4_step(const AnalyticFlow& flow, double& x, double& y, double t, double dt);

/// Moves every particle from t to t + dt in `substeps` RK4 steps, then wraps.
void advance(const AnalyticFlow& flow, ParticleEnsemble& ens, const RenderConfig& cfg, double t, double dt,
             int substeps = 4);

/// Adds Gaussian spots (pixel-integrated) for the given particles.
void render_particles(ParticleImage& img, std::span<const Particle> particles, double px_per_length);

/// Frame A at the current positions, frame B after one RK4 step of
/// `dt_pair`; both get background, Gaussian noise and 16-bit quantisation.
/// Does not modify the ensemble.
ImagePair advect_and_render(const AnalyticFlow& flow, const ParticleEnsemble& ens, double t, double dt_pair,
                            const RenderConfig& cfg, std::uint64_t noise_seed);

}  // namespace sppiv
