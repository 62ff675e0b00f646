// Acceptance run: one line per criterion, exit status 1 if any fails.
// Tolerances are fixed here; nothing is read from the environment.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sppiv/estimator.hpp"
#include "sppiv/experiments.hpp"
#include "sppiv/pipeline.hpp"
#include "sppiv/realtime.hpp"
#include "test_util.hpp"

using namespace sppiv;
using testutil::random_matrix;

namespace {

// Pinned tolerances.
constexpr double kPodTruncRel = 1e-8;
constexpr double kPodOrtho = 1e-10;
constexpr double kPodSeconds = 1.0;
constexpr double kRomNoiseless = 1e-8;
constexpr double kRomNoisy = 0.05;
constexpr double kRomNoiseLevel = 0.01;
constexpr int kRomSteps = 2000;
constexpr double kRomSeconds = 1.0;
constexpr double kGreedySeconds = 5.0;
constexpr double kKfScalar = 1e-12;
constexpr int kKfPsdSteps = 10000;
constexpr double kKfTrack = 1e-6;
constexpr int kKfTransient = 50;
constexpr double kPivBias = 0.05;
constexpr double kPivRms = 0.1;
constexpr int kPivMinWindows = 100;
constexpr double kFftBrute = 1e-8;
constexpr double kTrendR2 = 0.95;
constexpr double kMismatchFactor = 3.0;
constexpr int kRtMinPairs = 1900;
constexpr double kRtMeanUs = 500.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome pod_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_trunc = 0.0, worst_ortho = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Eigen::MatrixXd m = random_matrix(200, 100, seed);
    const SnapshotMatrix x = testutil::snapshots_from(m, 10, 10);
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    for (int r : {1, 5, 10, 25, 50, 99}) {
      const auto [basis, z] = compute_pod(x, r);
      const double err = (m - basis.modes * z.Z).norm();
      const double want = std::sqrt(sv.tail(sv.size() - r).squaredNorm());
      worst_trunc = std::max(worst_trunc, std::abs(err - want) / want);
      const Eigen::MatrixXd g = basis.modes.transpose() * basis.modes - Eigen::MatrixXd::Identity(r, r);
      worst_ortho = std::max(worst_ortho, g.cwiseAbs().maxCoeff());
    }
  }
  const double secs = seconds_since(t0);
  return {worst_trunc < kPodTruncRel && worst_ortho < kPodOrtho && secs < kPodSeconds,
          fmt("max rel truncation err %.2e (< %.0e), max |U^T U - I| %.2e (< %.0e), %.3f s (< %.0f s)", worst_trunc,
              kPodTruncRel, worst_ortho, kPodOrtho, secs, kPodSeconds)};
}

Outcome rom_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const int r = 6;
  const Eigen::MatrixXd q = testutil::random_orthonormal(r, r, 11);
  const Eigen::MatrixXd f0 = q * testutil::stable_rotation(r, 0.999, 12) * q.transpose();

  ModeSeries clean{Eigen::MatrixXd(r, kRomSteps), 1.0};
  clean.Z.col(0) = Eigen::VectorXd::Ones(r);
  for (int k = 1; k < kRomSteps; ++k) clean.Z.col(k) = f0 * clean.Z.col(k - 1);
  const double err_clean = (fit_system_matrix(clean) - f0).norm();

  // Process noise with a standard deviation of 1 % of the noiseless RMS.
  const double sigma = kRomNoiseLevel * std::sqrt(clean.Z.squaredNorm() / static_cast<double>(clean.Z.size()));
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, sigma);
  ModeSeries noisy{Eigen::MatrixXd(r, kRomSteps), 1.0};
  noisy.Z.col(0) = clean.Z.col(0);
  for (int k = 1; k < kRomSteps; ++k) {
    noisy.Z.col(k) = f0 * noisy.Z.col(k - 1);
    for (int i = 0; i < r; ++i) noisy.Z(i, k) += g(rng);
  }
  const double err_noisy = (fit_system_matrix(noisy) - f0).norm();

  // Same noise level added to the observed series instead.
  ModeSeries observed = clean;
  for (Eigen::Index i = 0; i < observed.Z.size(); ++i) observed.Z.data()[i] += g(rng);
  const double err_obs = (fit_system_matrix(observed) - f0).norm();

  const double secs = seconds_since(t0);
  return {err_clean < kRomNoiseless && err_noisy < kRomNoisy && err_obs < kRomNoisy && secs < kRomSeconds,
          fmt("noiseless %.2e (< %.0e), 1%% process noise %.4f, 1%% observation noise %.4f (< %.2f), %.3f s", err_clean,
              kRomNoiseless, err_noisy, err_obs, kRomNoisy, secs)};
}

// Per-step score written with dense inverses and determinants.
double dense_step_score(const Eigen::MatrixXd& c_prev, const Eigen::MatrixXd& w, int k, int r) {
  if (c_prev.rows() == 0) return (w * w.transpose()).determinant();
  if (2 * k <= r) {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(r, r) -
                              c_prev.transpose() * (c_prev * c_prev.transpose()).inverse() * c_prev;
    return (w * m * w.transpose()).determinant();
  }
  return (Eigen::Matrix2d::Identity() + w * (c_prev.transpose() * c_prev).inverse() * w.transpose()).determinant();
}

Outcome greedy_optimality() {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = 50, r = 8, p = 10;
  int mismatches = 0, steps = 0;
  bool under = false, over = false;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto grid = std::make_shared<const Grid>(n, 1, 1.0, 1.0);
    const Eigen::MatrixXd modes = testutil::random_orthonormal(2 * n, r, seed);
    const SensorSet s = greedy_select(modes, grid, p);
    std::set<int> taken;
    Eigen::MatrixXd c(0, r);
    for (int k = 1; k <= p; ++k) {
      (2 * k <= r ? under : over) = true;
      int arg = -1;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < n; ++a) {
        if (taken.count(a)) continue;
        const double sc = dense_step_score(c, candidate_block(modes, *grid, a), k, r);
        if (sc > best) best = sc, arg = a;
      }
      const int chosen = s.cells[static_cast<std::size_t>(k - 1)];
      if (chosen != arg) ++mismatches;
      ++steps;
      taken.insert(chosen);
      c.conservativeResize(c.rows() + 2, Eigen::NoChange);
      c.bottomRows(2) = candidate_block(modes, *grid, chosen);
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && under && over && secs < kGreedySeconds,
          fmt("%d/%d steps match the exhaustive argmax, both branches %s, %.3f s (< %.0f s)", steps - mismatches, steps,
              under && over ? "exercised" : "NOT exercised", secs, kGreedySeconds)};
}

bool covariance_ok(const Eigen::MatrixXd& p) {
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(p).eigenvalues().minCoeff() >= -1e-12 * scale;
}

Outcome kalman_sanity() {
  // Scalar state observed through one or two channels; information-form oracle.
  double worst_scalar = 0.0;
  for (int m : {1, 2}) {
    const double a = 0.93, q = 0.2;
    const Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(m, 1.0, 0.6);
    const Eigen::VectorXd rv = Eigen::VectorXd::LinSpaced(m, 0.5, 1.7);
    LinearRom rom{Eigen::MatrixXd::Constant(1, 1, a), Eigen::VectorXd::Constant(1, q), rv};
    for (auto form : {KalmanFilter::Form::Auto, KalmanFilter::Form::Direct}) {
      KalmanFilter kf(rom, Eigen::MatrixXd(c), form);
      double z = 0.0, pp = 1.0;
      std::mt19937_64 rng(4);
      std::normal_distribution<double> g(0.0, 1.0);
      for (int k = 0; k < 200; ++k) {
        Eigen::VectorXd y(m);
        for (int i = 0; i < m; ++i) y[i] = g(rng);
        kf.step(y);
        const double zp = a * z, pm = a * a * pp + q;
        double info = 1.0 / pm, num = zp / pm;
        for (int i = 0; i < m; ++i) {
          info += c[i] * c[i] / rv[i];
          num += c[i] * y[i] / rv[i];
        }
        pp = 1.0 / info;
        z = pp * num;
        worst_scalar = std::max({worst_scalar, std::abs(kf.state().z_hat[0] - z) / std::max(1.0, std::abs(z)),
                                 std::abs(kf.state().P(0, 0) - pp) / pp});
      }
    }
  }

  // Covariance over 10^4 steps on a trained synthetic model.
  RunConfig cfg;
  cfg.snapshots = 1200;
  const Dataset d = make_dataset(cfg);
  const std::vector<Segment> segs{{0, d.snapshots()}};
  const TrainedModel model = train_model(d.measured, segs, 10, 20);
  bool psd = true;
  for (int p : {3, 20}) {
    KalmanFilter kf(model.rom(p), model.sensors.prefix(p).C);
    const Eigen::MatrixXd y = model.y.topRows(2 * p);
    for (int k = 0; k < kKfPsdSteps; ++k) {
      kf.step(y.col(k % y.cols()));
      psd = psd && covariance_ok(kf.state().P);
    }
  }

  // Exact model, no noise: track the true trajectory after the transient.
  double worst_track = 0.0;
  const int r = 6;
  const Eigen::MatrixXd q = testutil::random_orthonormal(r, r, 8);
  const Eigen::MatrixXd f = q * testutil::stable_rotation(r, 1.0, 5) * q.transpose();
  for (int m : {4, 12}) {
    const Eigen::MatrixXd c = random_matrix(m, r, 2);
    KalmanFilter kf(LinearRom{f, Eigen::VectorXd::Constant(r, 1e-10), Eigen::VectorXd::Constant(m, 1e-10)}, c);
    Eigen::VectorXd z = Eigen::VectorXd::Ones(r);
    Eigen::MatrixXd truth(r, 300), est(r, 300);
    for (int k = 0; k < 300; ++k) {
      z = f * z;
      truth.col(k) = z;
      est.col(k) = kf.step(c * z);
    }
    worst_track = std::max(worst_track, error_epsilon(truth.rightCols(300 - kKfTransient),
                                                      est.rightCols(300 - kKfTransient)));
  }
  return {worst_scalar < kKfScalar && psd && worst_track < kKfTrack,
          fmt("scalar closed form %.2e (< %.0e), P symmetric PSD over %d steps: %s, tracking eps after %d steps %.2e "
              "(< %.0e)",
              worst_scalar, kKfScalar, kKfPsdSteps, psd ? "yes" : "NO", kKfTransient, worst_track, kKfTrack)};
}

Outcome piv_accuracy() {
  const double shift = 3.25;
  FlowSpec spec;
  spec.kind = FlowKind::Uniform;
  RenderConfig rc;
  const double dt = 80e-6;
  spec.U_inf = shift / (rc.px_per_length * dt);
  const ImagePair pair = advect_and_render(AnalyticFlow(spec), seed_particles(rc, 7), 0.0, dt, rc, 107);
  PivConfig cfg{32, 0.5, rc.px_per_length, 0, 0, 0};
  const WindowLayout l = make_layout(pair.a.width, pair.a.height, cfg);
  const GridPtr g = make_grid(l);
  const FullPivResult res = full_piv(pair, g, l, cfg);
  const double to_px = cfg.px_per_length * dt;
  const int n = g->n_active();
  double bias = 0.0, sq = 0.0;
  for (int a = 0; a < n; ++a) {
    const double ex = res.field.u[a] * to_px - shift, ey = res.field.v[a] * to_px;
    bias += ex;
    sq += ex * ex + ey * ey;
  }
  bias /= n;
  const double rms = std::sqrt(sq / n);

  double worst_fft = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::vector<double> a(64), b(64);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    const auto fft = cross_correlate(a, b, 8);
    const auto brute = testutil::brute_correlation(a, b, 8);
    double scale = 0.0;
    for (double v : brute) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < fft.size(); ++i) worst_fft = std::max(worst_fft, std::abs(fft[i] - brute[i]) / scale);
  }
  return {std::abs(bias) < kPivBias && rms < kPivRms && n >= kPivMinWindows && worst_fft < kFftBrute,
          fmt("%d windows, bias %+.4f px (< %.2f), RMS %.4f px (< %.1f), invalid %d, FFT vs direct %.2e (< %.0e)", n,
              bias, kPivBias, rms, kPivRms, res.invalid, worst_fft, kFftBrute)};
}

const CaseReport* find_case(const std::vector<CaseReport>& cases, int p, Estimator e) {
  for (const auto& c : cases)
    if (c.p == p && c.estimator == e) return &c;
  return nullptr;
}

Outcome accuracy_and_step_trend() {
  RunConfig cfg;
  cfg.r = 10;
  const SnapshotMatrix data = make_dataset(cfg).measured;
  const std::vector<int> ps{5, 10, 15, 20, 25, 30};
  const std::vector<Estimator> kf{Estimator::Kalman};
  const auto cases = cross_validate(data, cfg.folds, 10, ps, kf);
  const CaseReport* c5 = find_case(cases, 5, Estimator::Kalman);
  const CaseReport* c30 = find_case(cases, 30, Estimator::Kalman);
  const bool eps_ok = c5 && c30 && c5->ok && c30->ok && c30->eps.mean < c5->eps.mean;

  cfg.bench_p.clear();
  for (int p = 5; p <= 100; p += 5) cfg.bench_p.push_back(p);
  cfg.bench_estimators = {Estimator::Kalman};
  cfg.bench_steps = 1000;
  cfg.bench_repeats = 20;
  const BenchReport b = bench_step_time(cfg);
  const LinearFit fit = b.trends.front().fit;
  const double t5 = b.rows.front().total_us.mean, t100 = b.rows.back().total_us.mean;
  return {eps_ok && fit.r_squared > kTrendR2 && fit.slope > 0.0,
          fmt("KF eps p=5 %.4f -> p=30 %.4f; step time %.1f us (p=5) .. %.1f us (p=100), slope %.3f us/point, "
              "R^2 %.4f (> %.2f)",
              c5 ? c5->eps.mean : -1.0, c30 ? c30->eps.mean : -1.0, t5, t100, fit.slope, fit.r_squared, kTrendR2)};
}

Outcome pinv_peak() {
  RunConfig cfg;
  cfg.field_noise = 1.0;
  const SnapshotMatrix data = make_dataset(cfg).measured;
  const std::vector<int> ps{3, 4, 5, 6, 7, 10};
  const std::vector<Estimator> est{Estimator::Kalman, Estimator::Pinv};
  const auto cases = cross_validate(data, cfg.folds, 10, ps, est);
  int arg = -1;
  double best = -1.0;
  bool unique = true, kf_better = true, all_ok = true;
  std::string pinv_line, kf_line;
  for (int p : ps) {
    const CaseReport* pc = find_case(cases, p, Estimator::Pinv);
    const CaseReport* kc = find_case(cases, p, Estimator::Kalman);
    if (!pc || !kc || !pc->ok || !kc->ok) {
      all_ok = false;
      continue;
    }
    pinv_line += fmt(" %d:%.3f", p, pc->eps.mean);
    kf_line += fmt(" %d:%.3f", p, kc->eps.mean);
    if (pc->eps.mean > best) {
      best = pc->eps.mean;
      arg = p;
    }
    if (p <= 5 && !(kc->eps.mean < pc->eps.mean)) kf_better = false;
  }
  for (int p : ps) {
    const CaseReport* pc = find_case(cases, p, Estimator::Pinv);
    if (pc && p != arg && pc->eps.mean == best) unique = false;
  }
  return {all_ok && arg == 5 && unique && kf_better,
          fmt("pinv eps {%s } max at p=%d (want 5); KF eps {%s }; KF < pinv for p<=5: %s", pinv_line.c_str(), arg,
              kf_line.c_str(), kf_better ? "yes" : "NO")};
}

Outcome regime_mismatch() {
  RunConfig cfg;
  cfg.sweep_r = {10};
  cfg.sweep_p = {20};
  cfg.sweep_estimators = {Estimator::Kalman};
  cfg.sweep_theta = {0.0, 1.0, 2.0, 3.0, 4.0};
  cfg.theta_test = 0.0;
  const ExperimentReport rep = sweep(cfg);
  bool ok = rep.failed() == 0 && rep.cases.size() == 5;
  double matched = 0.0;
  for (const auto& c : rep.cases)
    if (c.theta_train == cfg.theta_test) matched = c.mode1_offset.mean;
  std::string line;
  double last = -1.0;
  bool monotone = true, offset = true;
  for (const auto& c : rep.cases) {
    line += fmt(" %.0f:%.3f/%.3f", c.theta_train, c.eps_offset.mean, c.mode1_offset.mean);
    if (c.eps_offset.mean < last) monotone = false;
    last = c.eps_offset.mean;
    if (c.theta_train != cfg.theta_test && !(c.mode1_offset.mean > kMismatchFactor * matched)) offset = false;
  }
  return {ok && monotone && offset,
          fmt("theta_train:eps_offset/mode-1 offset {%s }; eps_offset non-decreasing: %s; every mismatched offset > "
              "%.0fx matched (%.4f): %s",
              line.c_str(), monotone ? "yes" : "NO", kMismatchFactor, matched, offset ? "yes" : "NO")};
}

Outcome realtime_operating_point() {
  RunConfig cfg;
  cfg.r = 10;
  cfg.p = 20;
  cfg.sampling_rate = 2000.0;
  cfg.rt_pairs = 1914;
  cfg.rt_runs = 3;
  const RealtimeReport rep = realtime_sim(cfg);
  bool ok = rep.runs.size() == 3;
  std::string runs;
  for (const auto& r : rep.runs) {
    ok = ok && r.produced >= kRtMinPairs && r.processed == r.produced && r.dropped == 0 && r.step_us.mean < kRtMeanUs;
    runs += fmt(" [%d/%d processed, %d dropped, %d misses, %.1f +- %.1f us, eps %.4f, fifo %d]", r.processed,
                r.produced, r.dropped, r.deadline_misses, r.step_us.mean, r.step_us.std, r.eps, r.fifo ? 1 : 0);
  }
  return {ok, fmt("per-run mean step %.1f +- %.1f us over 3 runs (< %.0f); offline eps %.4f; success flag %s;%s",
                  rep.run_step_us.mean, rep.run_step_us.std, kRtMeanUs, rep.eps_offline, rep.success ? "yes" : "no",
                  runs.c_str())};
}

std::string csv_without_timing(const ExperimentReport& rep) {
  std::ostringstream os;
  write_cases_csv(os, rep);
  write_folds_csv(os, rep);
  std::istringstream is(os.str());
  std::string line, out;
  bool cases_part = true;
  while (std::getline(is, line)) {
    if (line.rfind("r,p,theta_train,theta_test,estimator,fold,", 0) == 0) cases_part = false;
    if (cases_part) {
      // The two timing columns are last.
      for (int k = 0; k < 2; ++k) line.erase(line.rfind(','));
    }
    out += line + '\n';
  }
  return out;
}

Outcome determinism() {
  RunConfig cfg;
  cfg.snapshots = 1000;
  cfg.sweep_r = {6, 10};
  cfg.sweep_p = {5, 10, 20};
  cfg.sweep_estimators = {Estimator::Kalman, Estimator::Pinv, Estimator::KalmanSteady};
  const std::string a = csv_without_timing(sweep(cfg)), b = csv_without_timing(sweep(cfg));
  RunConfig th = cfg;
  th.train_snapshots = 1000;
  th.sweep_theta = {0.0, 2.0};
  const std::string c = csv_without_timing(sweep(th)), d = csv_without_timing(sweep(th));
  return {a == b && c == d && !a.empty(),
          fmt("plain sweep %s (%zu bytes), regime sweep %s (%zu bytes)", a == b ? "identical" : "DIFFERS", a.size(),
              c == d ? "identical" : "DIFFERS", c.size())};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {"1 pod-correctness", pod_correctness},       {"2 rom-recovery", rom_recovery},
      {"3 greedy-optimality", greedy_optimality},   {"4 kalman-sanity", kalman_sanity},
      {"5 piv-accuracy", piv_accuracy},             {"6 trend-eps-and-step-time", accuracy_and_step_trend},
      {"7 pinv-peak-at-half-r", pinv_peak},         {"8 regime-mismatch-offset", regime_mismatch},
      {"9 realtime-2000hz", realtime_operating_point}, {"10 sweep-determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s criterion %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
