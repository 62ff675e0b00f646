#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sppiv/config.hpp"
#include "sppiv/estimator.hpp"
#include "sppiv/flowdata.hpp"
#include "sppiv/piv.hpp"
#include "sppiv/pod.hpp"
#include "sppiv/rom.hpp"
#include "sppiv/sensors.hpp"
#include "sppiv/synth.hpp"

namespace sppiv {

/// Deterministic sub-seed for a named purpose (splitmix64 of splitmix64(seed) ^ tag).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

WindowLayout layout_of(const RunConfig& cfg);
/// Layout grid with `piv.mask_rect` applied to window centres.
GridPtr grid_of(const RunConfig& cfg, const WindowLayout& layout);

struct Dataset {
  SnapshotMatrix truth;     // analytic field at the grid points
  SnapshotMatrix measured;  // what the instrument delivers (truth + noise, or full-field PIV)
  std::vector<double> times;
  WindowLayout layout;
  std::vector<ImagePair> pairs;  // image source only, when kept
  int snapshots() const { return measured.snapshots(); }
};

std::vector<double> sample_times(double t0, double rate, int n);

/// Rendered pair sequence: pair j is taken at t0 + j / rate.
std::vector<ImagePair> render_sequence(const RunConfig& cfg, const FlowSpec& flow, int n, double t0,
                                       std::uint64_t seed);

/// Builds `n` snapshots from time `t0` for the given flow. `seed` drives
/// measurement noise / particle seeding. Image pairs are kept on request.
Dataset make_dataset(const RunConfig& cfg, const FlowSpec& flow, int n, double t0, std::uint64_t seed,
                     bool keep_pairs = false);
Dataset make_dataset(const RunConfig& cfg);

/// Observation rows (u, v interleaved per sensor) of a snapshot matrix.
Eigen::MatrixXd sensor_rows(const SnapshotMatrix& x, const SensorSet& s);
/// Mean field at the sensors in observation order.
Eigen::VectorXd sensor_mean(const VelocityField& mean, const SensorSet& s);

/// Trained state shared by every p up to `sensors.points()`.
struct TrainedModel {
  PodBasis basis;
  SystemFit fit;
  SensorSet sensors;  // greedy order; any prefix is itself greedy
  ModeSeries z;       // training mode coefficients
  Eigen::MatrixXd y;  // training observations at all sensors
  std::vector<Segment> segments;

  /// ROM (F, Q, R) for the first p sensors.
  LinearRom rom(int p) const;
};

/// `train` must be centred on its own mean. Segments mark contiguous runs
/// (no transition is fitted across a segment boundary).
TrainedModel train_model(const SnapshotMatrix& train, std::span<const Segment> segments, int r, int p_max);
/// Same, but with a fixed set of sensor cells instead of greedy placement.
TrainedModel train_model_with_cells(const SnapshotMatrix& train, std::span<const Segment> segments, int r,
                                    std::vector<int> cells);

/// Predict/update estimator of either kind behind one streaming interface.
class OnlineEstimator {
 public:
  OnlineEstimator(Estimator kind, const LinearRom& rom, const Eigen::MatrixXd& C);

  const Eigen::VectorXd& step(const Eigen::Ref<const Eigen::VectorXd>& y);
  /// Frame without an observation: prediction only (the pseudoinverse
  /// estimate is held).
  const Eigen::VectorXd& skip();
  void reset();
  const Eigen::VectorXd& estimate() const;
  std::int64_t last_step_ns() const { return last_ns_; }
  Estimator kind() const { return kind_; }
  std::int64_t regularized_updates() const;

 private:
  Estimator kind_;
  std::unique_ptr<KalmanFilter> kf_;
  std::unique_ptr<PinvEstimator> pinv_;
  Eigen::VectorXd held_;
  std::int64_t last_ns_ = 0;
};

struct EstimateRun {
  Eigen::MatrixXd Z_hat;  // r x N
  std::vector<std::int64_t> step_ns;
  std::int64_t regularized = 0;
};

/// Streams the columns of Y (already centred) through a fresh estimator.
EstimateRun run_estimator(Estimator kind, const LinearRom& rom, const Eigen::MatrixXd& C, const Eigen::MatrixXd& Y);

struct FoldScore {
  double eps = 0.0;
  double eps_offset = 0.0;
  double mode1_mean = 0.0;    // |temporal mean of the mode-1 estimate|
  double mode1_offset = 0.0;  // |temporal mean of (estimate - reference)| for mode 1
};

FoldScore score(const Eigen::MatrixXd& z_ref, const Eigen::MatrixXd& z_hat);

}  // namespace sppiv
