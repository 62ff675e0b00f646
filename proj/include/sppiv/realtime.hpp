#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sppiv/config.hpp"
#include "sppiv/metrics.hpp"
#include "sppiv/pipeline.hpp"

namespace sppiv {

/// Everything the consumer needs, prepared before the clock starts.
struct RealtimeSetup {
  std::vector<ImagePair> pairs;
  Eigen::MatrixXd z_ref;  // r x N reference coefficients of the pair sequence
  SensorSet sensors;
  LinearRom rom;
  Eigen::VectorXd mean_at_sensors;
  WindowLayout layout;
  PivConfig piv;
  Estimator estimator = Estimator::Kalman;
};

/// Trains on full-field PIV of a separate rendered record, renders
/// cfg.rt_pairs pairs and builds the reference from full-field PIV of those.
RealtimeSetup prepare_realtime(const RunConfig& cfg);

struct OfflineResult {
  Eigen::MatrixXd Z_hat;
  double eps = 0.0;
};

/// The consumer's arithmetic without pacing or drops.
OfflineResult run_offline(const RealtimeSetup& setup);

struct StepRecord {
  int frame = 0;
  double t = 0.0;              // scheduled arrival, s after start
  std::int64_t step_ns = 0;    // processing time including predict-only catch-up
  std::int64_t latency_ns = 0; // finish minus scheduled arrival
  bool missed = false;         // finished after the next frame was due
  bool swapped = false;        // naive mode processed (b, a)
};

struct RealtimeRun {
  int produced = 0;
  int processed = 0;
  int dropped = 0;
  int deadline_misses = 0;
  MeanStd step_us;
  MeanStd transient_us;  // first transient steps
  MeanStd steady_us;
  double eps = 0.0;  // over processed frames
  bool success = false;
  bool fifo = false;  // both threads ran under SCHED_FIFO
  std::vector<StepRecord> steps;
};

struct RealtimeOptions {
  double rate = 2000.0;
  bool naive = false;
  int transient = 100;
  double eps_offline = 0.0;
  double eps_factor = 1.5;
  bool fifo = true;  // request SCHED_FIFO; falls back silently when refused
};

/// One paced run: a producer emits pairs at `rate` into a single slot
/// (drop-oldest); the consumer runs sparse PIV and the estimator per pair.
/// In naive mode every drop flips the frame order of later pairs.
RealtimeRun realtime_run(const RealtimeSetup& setup, const RealtimeOptions& opt);

struct RealtimeReport {
  std::vector<RealtimeRun> runs;
  double eps_offline = 0.0;
  MeanStd run_step_us;  // per-run mean step time, across runs
  bool success = false;  // every run succeeded
};

RealtimeReport realtime_sim(const RunConfig& cfg);
RealtimeReport realtime_sim(const RealtimeSetup& setup, const RunConfig& cfg);

void write_realtime_csv(std::ostream& os, const RealtimeReport& report);
void write_realtime_steps_csv(std::ostream& os, const RealtimeRun& run);

}  // namespace sppiv
