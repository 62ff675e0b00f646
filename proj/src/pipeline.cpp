#include "sppiv/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "sppiv/error.hpp"
#include "sppiv/metrics.hpp"

namespace sppiv {

namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

constexpr std::uint64_t kTagParticles = 0x5041525449434c45ULL;
constexpr std::uint64_t kTagPixelNoise = 0x504958454c4e4f49ULL;
constexpr std::uint64_t kTagFieldNoise = 0x4649454c444e4f49ULL;

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // Hash the seed before mixing in the tag: seed ^ tag alone collides.
  return splitmix64(splitmix64(seed) ^ tag);
}

WindowLayout layout_of(const RunConfig& cfg) { return make_layout(cfg.render.width, cfg.render.height, cfg.piv); }

GridPtr grid_of(const RunConfig& cfg, const WindowLayout& layout) {
  if (cfg.mask_rect.empty()) return make_grid(layout);
  const auto& m = cfg.mask_rect;
  std::vector<bool> mask(static_cast<std::size_t>(layout.nx * layout.ny), false);
  for (int iy = 0; iy < layout.ny; ++iy) {
    for (int ix = 0; ix < layout.nx; ++ix) {
      const double cx = layout.origin_x(ix) + 0.5 * layout.window;
      const double cy = layout.origin_y(iy) + 0.5 * layout.window;
      if (cx >= m[0] && cx < m[2] && cy >= m[1] && cy < m[3]) mask[static_cast<std::size_t>(iy * layout.nx + ix)] = true;
    }
  }
  return make_grid(layout, std::move(mask));
}

std::vector<double> sample_times(double t0, double rate, int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) t[static_cast<std::size_t>(j)] = t0 + j / rate;
  return t;
}

std::vector<ImagePair> render_sequence(const RunConfig& cfg, const FlowSpec& flow, int n, double t0,
                                       std::uint64_t seed) {
  require(n >= 1, ErrorCode::InvalidArgument, "sequence length must be >= 1");
  const RenderConfig rc = cfg.render_config();
  const AnalyticFlow af(flow);
  ParticleEnsemble ens = seed_particles(rc, derive_seed(seed, kTagParticles));
  const double frame_dt = 1.0 / cfg.sampling_rate;
  std::vector<ImagePair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double t = t0 + j * frame_dt;
    out.push_back(advect_and_render(af, ens, t, cfg.dt_pair, rc,
                                    derive_seed(seed, kTagPixelNoise + static_cast<std::uint64_t>(j))));
    advance(af, ens, rc, t, frame_dt);
  }
  return out;
}

Dataset make_dataset(const RunConfig& cfg, const FlowSpec& flow, int n, double t0, std::uint64_t seed,
                     bool keep_pairs) {
  require(n >= 2, ErrorCode::InsufficientData, "a dataset needs at least two snapshots");
  Dataset d;
  d.layout = layout_of(cfg);
  const GridPtr grid = grid_of(cfg, d.layout);
  d.times = sample_times(t0, cfg.sampling_rate, n);
  const double dt = 1.0 / cfg.sampling_rate;
  const AnalyticFlow af(flow);

  if (cfg.source == DataSource::Field) {
    auto truth = sample_fields(af, grid, d.times, d.layout.x0(), d.layout.y0());
    std::vector<VelocityField> meas = truth;
    if (cfg.field_noise > 0.0) {
      std::mt19937_64 rng(derive_seed(seed, kTagFieldNoise));
      std::normal_distribution<double> noise(0.0, cfg.field_noise);
      for (auto& f : meas) {
        for (Eigen::Index i = 0; i < f.u.size(); ++i) f.u[i] += noise(rng);
        for (Eigen::Index i = 0; i < f.v.size(); ++i) f.v[i] += noise(rng);
      }
    }
    d.truth = assemble(truth, dt);
    d.measured = assemble(meas, dt);
    return d;
  }

  // Image source: truth at the pair midpoint, measurement from full-field PIV.
  auto pairs = render_sequence(cfg, flow, n, t0, seed);
  std::vector<double> mid(d.times);
  for (double& t : mid) t += 0.5 * cfg.dt_pair;
  d.truth = assemble(sample_fields(af, grid, mid, d.layout.x0(), d.layout.y0()), dt);
  std::vector<VelocityField> meas;
  meas.reserve(pairs.size());
  for (const auto& pr : pairs) meas.push_back(full_piv(pr, grid, d.layout, cfg.piv).field);
  d.measured = assemble(meas, dt);
  if (keep_pairs) d.pairs = std::move(pairs);
  return d;
}

Dataset make_dataset(const RunConfig& cfg) {
  return make_dataset(cfg, cfg.flow, cfg.snapshots, cfg.t_start, cfg.seed);
}

Eigen::MatrixXd sensor_rows(const SnapshotMatrix& x, const SensorSet& s) {
  require(same_grid(x.grid, s.grid), ErrorCode::GridMismatch, "sensors belong to another grid");
  const int n = x.n_active();
  Eigen::MatrixXd y(2 * s.points(), x.snapshots());
  for (int k = 0; k < s.points(); ++k) {
    const int a = x.grid->active_of(s.cells[static_cast<std::size_t>(k)]);
    y.row(2 * k) = x.data.row(a);
    y.row(2 * k + 1) = x.data.row(n + a);
  }
  return y;
}

Eigen::VectorXd sensor_mean(const VelocityField& mean, const SensorSet& s) {
  require(same_grid(mean.grid, s.grid), ErrorCode::GridMismatch, "sensors belong to another grid");
  Eigen::VectorXd m(2 * s.points());
  for (int k = 0; k < s.points(); ++k) {
    const int a = mean.grid->active_of(s.cells[static_cast<std::size_t>(k)]);
    m[2 * k] = mean.u[a];
    m[2 * k + 1] = mean.v[a];
  }
  return m;
}

LinearRom TrainedModel::rom(int p) const {
  require(p >= 1 && p <= sensors.points(), ErrorCode::InvalidArgument,
          "p = " + std::to_string(p) + " exceeds the trained sensor count " + std::to_string(sensors.points()));
  const Eigen::MatrixXd C = sensors.C.topRows(2 * p);
  auto [Q, R] = estimate_noise(z, y.topRows(2 * p), fit.F, C, segments);
  return LinearRom{fit.F, std::move(Q), std::move(R)};
}

namespace {

TrainedModel finish_training(const SnapshotMatrix& train, std::span<const Segment> segments, PodBasis basis,
                             ModeSeries z, SensorSet sensors) {
  TrainedModel m;
  m.segments.assign(segments.begin(), segments.end());
  m.fit = fit_system(z, segments);
  m.y = sensor_rows(train, sensors);
  m.basis = std::move(basis);
  m.z = std::move(z);
  m.sensors = std::move(sensors);
  return m;
}

}  // namespace

TrainedModel train_model(const SnapshotMatrix& train, std::span<const Segment> segments, int r, int p_max) {
  auto [basis, z] = compute_pod(train, r);
  SensorSet s = greedy_select(basis, p_max);
  return finish_training(train, segments, std::move(basis), std::move(z), std::move(s));
}

TrainedModel train_model_with_cells(const SnapshotMatrix& train, std::span<const Segment> segments, int r,
                                    std::vector<int> cells) {
  auto [basis, z] = compute_pod(train, r);
  SensorSet s = sensors_from_cells(basis, std::move(cells));
  return finish_training(train, segments, std::move(basis), std::move(z), std::move(s));
}

OnlineEstimator::OnlineEstimator(Estimator kind, const LinearRom& rom, const Eigen::MatrixXd& C) : kind_(kind) {
  if (kind == Estimator::Pinv) {
    pinv_ = std::make_unique<PinvEstimator>(C);
    held_ = Eigen::VectorXd::Zero(C.cols());
  } else {
    kf_ = std::make_unique<KalmanFilter>(rom, C);
    if (kind == Estimator::KalmanSteady) kf_->freeze_gain();
  }
}

const Eigen::VectorXd& OnlineEstimator::step(const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (pinv_) {
    const auto& z = pinv_->estimate(y);
    held_ = z;
    last_ns_ = pinv_->last_step_ns();
    return z;
  }
  const auto& z = kf_->step(y);
  last_ns_ = kf_->last_step_ns();
  return z;
}

const Eigen::VectorXd& OnlineEstimator::skip() {
  const auto t0 = now_ns();
  if (kf_) kf_->predict();
  last_ns_ = now_ns() - t0;
  return estimate();
}

void OnlineEstimator::reset() {
  if (kf_) kf_->reset();  // a frozen gain survives the reset
  if (pinv_) held_.setZero();
}

const Eigen::VectorXd& OnlineEstimator::estimate() const { return kf_ ? kf_->state().z_hat : held_; }

std::int64_t OnlineEstimator::regularized_updates() const { return kf_ ? kf_->regularized_updates() : 0; }

EstimateRun run_estimator(Estimator kind, const LinearRom& rom, const Eigen::MatrixXd& C, const Eigen::MatrixXd& Y) {
  require(Y.rows() == C.rows(), ErrorCode::DimensionMismatch, "observation rows do not match C");
  OnlineEstimator est(kind, rom, C);
  EstimateRun run;
  run.Z_hat.resize(C.cols(), Y.cols());
  run.step_ns.resize(static_cast<std::size_t>(Y.cols()));
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    run.Z_hat.col(j) = est.step(Y.col(j));
    run.step_ns[static_cast<std::size_t>(j)] = est.last_step_ns();
  }
  run.regularized = est.regularized_updates();
  return run;
}

FoldScore score(const Eigen::MatrixXd& z_ref, const Eigen::MatrixXd& z_hat) {
  FoldScore s;
  s.eps = error_epsilon(z_ref, z_hat);
  s.eps_offset = error_offset_normalized(z_ref, z_hat);
  s.mode1_mean = std::abs(z_hat.row(0).mean());
  s.mode1_offset = std::abs((z_hat.row(0) - z_ref.row(0)).mean());
  return s;
}

}  // namespace sppiv
