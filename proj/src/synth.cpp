#include "sppiv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sppiv/error.hpp"

namespace sppiv {

FlowKind flow_kind_from_string(const std::string& s) {
  if (s == "uniform") return FlowKind::Uniform;
  if (s == "shear_layer" || s == "shear-layer") return FlowKind::ShearLayer;
  if (s == "vortex_street" || s == "vortex-street") return FlowKind::VortexStreet;
  fail(ErrorCode::Config, "unknown flow kind '" + s + "'");
}

const char* to_string(FlowKind k) {
  switch (k) {
    case FlowKind::Uniform: return "uniform";
    case FlowKind::ShearLayer: return "shear_layer";
    case FlowKind::VortexStreet: return "vortex_street";
  }
  return "?";
}

void FlowSpec::validate() const {
  const double vals[] = {U_inf, theta, y0, delta, y0_per_theta, delta_per_theta, amplitude, amplitude_decay,
                         envelope, wavelength, frequency, frequency_exponent, street_spacing, street_offset,
                         vortex_core, vortex_strength, convection};
  for (double v : vals) require(std::isfinite(v), ErrorCode::InvalidArgument, "flow parameters must be finite");
  // A uniform flow may be at rest (zero-displacement image pairs).
  require(kind == FlowKind::Uniform ? U_inf >= 0.0 : U_inf > 0.0, ErrorCode::InvalidArgument,
          "U_inf must be positive");
  if (kind == FlowKind::ShearLayer) {
    require(delta > 0 && envelope > 0 && wavelength > 0 && harmonics >= 0, ErrorCode::InvalidArgument,
            "shear-layer widths, wavelength and harmonic count must be positive");
    require(delta * (1.0 + theta * delta_per_theta) > 0.0, ErrorCode::InvalidArgument,
            "theta makes the shear-layer thickness non-positive");
  }
  if (kind == FlowKind::VortexStreet) {
    require(street_spacing > 0 && vortex_core > 0, ErrorCode::InvalidArgument, "vortex street spacing/core must be > 0");
  }
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

/// Harmonic table derived from the spec; phases drawn from the spec seed.
std::vector<AnalyticFlow::Harmonic> AnalyticFlow::harmonics_of(const FlowSpec& s) {
  std::vector<Harmonic> hs;
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  for (int h = 1; h <= s.harmonics; ++h) {
    const double k = kTwoPi * h / s.wavelength;
    const double vel = s.amplitude * s.U_inf * std::pow(s.amplitude_decay, h - 1);
    hs.push_back({vel / k, k, kTwoPi * s.frequency * std::pow(static_cast<double>(h), s.frequency_exponent),
                  phase(rng)});
  }
  return hs;
}

namespace {

double shear_y0(const FlowSpec& s) { return s.y0 + s.theta * s.y0_per_theta; }
double shear_delta(const FlowSpec& s) { return s.delta * (1.0 + s.theta * s.delta_per_theta); }

// Shear layer. Perturbation streamfunction psi = sum A g(y) cos(kx - wt + p),
// g = exp(-((y - yc)/w)^2); u' = dpsi/dy, v' = -dpsi/dx.
void shear_layer(const FlowSpec& s, std::span<const AnalyticFlow::Harmonic> harmonics, double x, double y, double t,
                 Velocity* vel, VelocityGradient* grad) {
  const double yc = shear_y0(s), d = shear_delta(s), w = s.envelope;
  const double eta = (y - yc) / d;
  const double th = std::tanh(eta);
  double u = s.U_inf * th, v = 0.0;
  double dudx = 0.0, dudy = s.U_inf * (1.0 - th * th) / d, dvdx = 0.0, dvdy = 0.0;

  const double q = (y - yc) / w;
  const double g = std::exp(-q * q);
  const double g1 = -2.0 * q / w * g;                  // g'
  const double g2 = (4.0 * q * q - 2.0) / (w * w) * g;  // g''
  for (const auto& h : harmonics) {
    const double arg = h.k * x - h.omega * t + h.phase;
    const double c = std::cos(arg), sn = std::sin(arg);
    u += h.amp * g1 * c;
    v += h.amp * g * h.k * sn;
    dudx += -h.amp * g1 * h.k * sn;
    dudy += h.amp * g2 * c;
    dvdx += h.amp * g * h.k * h.k * c;
    dvdy += h.amp * g1 * h.k * sn;
  }
  if (vel) *vel = {u, v};
  if (grad) *grad = {dudx, dudy, dvdx, dvdy};
}

// Vortex street. Each vortex contributes psi_j = s_j G exp(-r^2 / a^2),
// u = dpsi/dy, v = -dpsi/dx, summed over the vortices near x.
void vortex_street(const FlowSpec& s, double x, double y, double t, Velocity* vel, VelocityGradient* grad) {
  const double L = s.street_spacing, a2 = s.vortex_core * s.vortex_core;
  const double shift = s.convection * s.U_inf * t;
  const double yc = shear_y0(s);
  double u = s.U_inf, v = 0.0, dudx = 0.0, dudy = 0.0, dvdx = 0.0, dvdy = 0.0;
  const int reach = static_cast<int>(std::ceil(6.0 * s.vortex_core / L)) + 1;
  for (int row = 0; row < 2; ++row) {
    const double xr = shift + (row == 0 ? 0.0 : 0.5 * L);
    const double yr = yc + (row == 0 ? -s.street_offset : s.street_offset);
    const double sign = row == 0 ? 1.0 : -1.0;
    const long base = static_cast<long>(std::floor((x - xr) / L));
    for (long j = base - reach; j <= base + reach; ++j) {
      const double dx = x - (xr + static_cast<double>(j) * L), dy = y - yr;
      const double psi = sign * s.vortex_strength * std::exp(-(dx * dx + dy * dy) / a2);
      u += -2.0 * dy / a2 * psi;
      v += 2.0 * dx / a2 * psi;
      const double psi_xy = 4.0 * dx * dy / (a2 * a2) * psi;
      dudx += psi_xy;
      dvdy += -psi_xy;
      dudy += (-2.0 / a2 + 4.0 * dy * dy / (a2 * a2)) * psi;
      dvdx += (2.0 / a2 - 4.0 * dx * dx / (a2 * a2)) * psi;
    }
  }
  if (vel) *vel = {u, v};
  if (grad) *grad = {dudx, dudy, dvdx, dvdy};
}

}  // namespace

AnalyticFlow::AnalyticFlow(FlowSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind == FlowKind::ShearLayer) harmonics_ = harmonics_of(spec_);
}

Velocity AnalyticFlow::velocity(double x, double y, double t) const {
  Velocity out;
  switch (spec_.kind) {
    case FlowKind::Uniform: return {spec_.U_inf, 0.0};
    case FlowKind::ShearLayer: shear_layer(spec_, harmonics_, x, y, t, &out, nullptr); break;
    case FlowKind::VortexStreet: vortex_street(spec_, x, y, t, &out, nullptr); break;
  }
  return out;
}

VelocityGradient AnalyticFlow::gradient(double x, double y, double t) const {
  VelocityGradient out;
  switch (spec_.kind) {
    case FlowKind::Uniform: break;
    case FlowKind::ShearLayer: shear_layer(spec_, harmonics_, x, y, t, nullptr, &out); break;
    case FlowKind::VortexStreet: vortex_street(spec_, x, y, t, nullptr, &out); break;
  }
  return out;
}

Velocity velocity_at(const FlowSpec& spec, double x, double y, double t) {
  return AnalyticFlow(spec).velocity(x, y, t);
}

VelocityGradient velocity_gradient_at(const FlowSpec& spec, double x, double y, double t) {
  return AnalyticFlow(spec).gradient(x, y, t);
}

std::vector<VelocityField> sample_fields(const FlowSpec& spec, const GridPtr& grid, std::span<const double> times,
                                         double x0, double y0) {
  return sample_fields(AnalyticFlow(spec), grid, times, x0, y0);
}

std::vector<VelocityField> sample_fields(const AnalyticFlow& flow, const GridPtr& grid, std::span<const double> times,
                                         double x0, double y0) {
  std::vector<VelocityField> out;
  out.reserve(times.size());
  const int n = grid->n_active();
  for (double t : times) {
    VelocityField f(grid);
    for (int a = 0; a < n; ++a) {
      const Velocity vel = flow.velocity(x0 + grid->x_of(a), y0 + grid->y_of(a), t);
      f.u[a] = vel.u;
      f.v[a] = vel.v;
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Particle fresh_particle(const RenderConfig& cfg, std::mt19937_64& rng, double x_px, double y_px) {
  std::normal_distribution<double> diam(cfg.diameter_mean, cfg.diameter_std);
  std::normal_distribution<double> inten(cfg.intensity_mean, cfg.intensity_std);
  Particle p;
  p.x = x_px / cfg.px_per_length;
  p.y = y_px / cfg.px_per_length;
  p.diameter = std::max(1.0, diam(rng));
  p.intensity = std::max(0.1 * cfg.intensity_mean, inten(rng));
  return p;
}

}  // namespace

ParticleEnsemble seed_particles(const RenderConfig& cfg, std::uint64_t seed) {
  require(cfg.width > 0 && cfg.height > 0 && cfg.px_per_length > 0 && cfg.particles_per_px >= 0,
          ErrorCode::InvalidArgument, "invalid render configuration");
  ParticleEnsemble ens{{}, std::mt19937_64(seed)};
  const double w = cfg.width + 2 * cfg.margin_px, h = cfg.height + 2 * cfg.margin_px;
  const auto count = static_cast<std::size_t>(std::lround(cfg.particles_per_px * w * h));
  std::uniform_real_distribution<double> ux(-cfg.margin_px, cfg.width + cfg.margin_px);
  std::uniform_real_distribution<double> uy(-cfg.margin_px, cfg.height + cfg.margin_px);
  ens.particles.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = ux(ens.rng), y = uy(ens.rng);
    ens.particles.push_back(fresh_particle(cfg, ens.rng, x, y));
  }
  return ens;
}

void rk4_step(const AnalyticFlow& flow, double& x, double& y, double t, double dt) {
  const Velocity k1 = flow.velocity(x, y, t);
  const Velocity k2 = flow.velocity(x + 0.5 * dt * k1.u, y + 0.5 * dt * k1.v, t + 0.5 * dt);
  const Velocity k3 = flow.velocity(x + 0.5 * dt * k2.u, y + 0.5 * dt * k2.v, t + 0.5 * dt);
  const Velocity k4 = flow.velocity(x + dt * k3.u, y + dt * k3.v, t + dt);
  x += dt / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u);
  y += dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
}

void advance(const AnalyticFlow& flow, ParticleEnsemble& ens, const RenderConfig& cfg, double t, double dt,
             int substeps) {
  require(substeps >= 1, ErrorCode::InvalidArgument, "substeps must be >= 1");
  const double h = dt / substeps;
  const double lo_x = -cfg.margin_px, hi_x = cfg.width + cfg.margin_px;
  const double lo_y = -cfg.margin_px, hi_y = cfg.height + cfg.margin_px;
  for (auto& p : ens.particles) {
    for (int s = 0; s < substeps; ++s) rk4_step(flow, p.x, p.y, t + s * h, h);
    double xp = p.x * cfg.px_per_length, yp = p.y * cfg.px_per_length;
    if (xp >= lo_x && xp < hi_x && yp >= lo_y && yp < hi_y) continue;
    const double wx = hi_x - lo_x, wy = hi_y - lo_y;
    xp = lo_x + std::fmod(std::fmod(xp - lo_x, wx) + wx, wx);
    yp = lo_y + std::fmod(std::fmod(yp - lo_y, wy) + wy, wy);
    p = fresh_particle(cfg, ens.rng, xp, yp);
  }
}

void render_particles(ParticleImage& img, std::span<const Particle> particles, double px_per_length) {
  std::vector<double> ex, ey;
  for (const auto& p : particles) {
    const double xp = p.x * px_per_length, yp = p.y * px_per_length;
    const double sigma = p.diameter / 4.0;
    const int rad = static_cast<int>(std::ceil(3.0 * sigma)) + 1;
    const int x0 = std::max(0, static_cast<int>(std::floor(xp)) - rad);
    const int x1 = std::min(img.width - 1, static_cast<int>(std::floor(xp)) + rad);
    const int y0 = std::max(0, static_cast<int>(std::floor(yp)) - rad);
    const int y1 = std::min(img.height - 1, static_cast<int>(std::floor(yp)) + rad);
    if (x0 > x1 || y0 > y1) continue;
    const double scale = 1.0 / (sigma * std::numbers::sqrt2);
    ex.resize(static_cast<std::size_t>(x1 - x0 + 1));
    ey.resize(static_cast<std::size_t>(y1 - y0 + 1));
    // Per-axis pixel integrals of exp(-s^2 / 2 sigma^2), normalised to a unit peak.
    const double norm = std::sqrt(std::numbers::pi / 2.0) * sigma;
    for (int x = x0; x <= x1; ++x) {
      ex[static_cast<std::size_t>(x - x0)] = norm * (std::erf((x + 1 - xp) * scale) - std::erf((x - xp) * scale));
    }
    for (int y = y0; y <= y1; ++y) {
      ey[static_cast<std::size_t>(y - y0)] = norm * (std::erf((y + 1 - yp) * scale) - std::erf((y - yp) * scale));
    }
    for (int y = y0; y <= y1; ++y) {
      const double wy = p.intensity * ey[static_cast<std::size_t>(y - y0)];
      float* row = &img.pixels[static_cast<std::size_t>(y) * img.width];
      for (int x = x0; x <= x1; ++x) row[x] += static_cast<float>(wy * ex[static_cast<std::size_t>(x - x0)]);
    }
  }
}

namespace {

void finish_frame(ParticleImage& img, const RenderConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0 ? cfg.noise_sigma : 1.0);
  for (auto& px : img.pixels) {
    double v = px + cfg.background;
    if (cfg.noise_sigma > 0) v += noise(rng);
    px = static_cast<float>(std::clamp(std::round(v), 0.0, 65535.0));
  }
}

}  // namespace

ImagePair advect_and_render(const AnalyticFlow& flow, const ParticleEnsemble& ens, double t, double dt_pair,
                            const RenderConfig& cfg, std::uint64_t noise_seed) {
  require(dt_pair > 0.0, ErrorCode::InvalidArgument, "pair interval must be positive");
  ImagePair pair{ParticleImage(cfg.width, cfg.height, t), ParticleImage(cfg.width, cfg.height, t + dt_pair), dt_pair};
  render_particles(pair.a, ens.particles, cfg.px_per_length);
  std::vector<Particle> moved = ens.particles;
  for (auto& p : moved) rk4_step(flow, p.x, p.y, t, dt_pair);
  render_particles(pair.b, moved, cfg.px_per_length);
  std::mt19937_64 rng(noise_seed);
  finish_frame(pair.a, cfg, rng);
  finish_frame(pair.b, cfg, rng);
  return pair;
}

}  // namespace sppiv
