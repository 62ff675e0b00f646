#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sppiv/config.hpp"
#include "sppiv/metrics.hpp"
#include "sppiv/pipeline.hpp"

namespace sppiv {

struct CaseReport {
  int r = 0;
  int p = 0;
  double theta_train = 0.0;
  double theta_test = 0.0;
  Estimator estimator = Estimator::Kalman;
  std::vector<FoldScore> folds;
  MeanStd eps;
  MeanStd eps_offset;
  MeanStd mode1_mean;
  MeanStd mode1_offset;
  MeanStd step_us;  // estimator wall time per step, all folds pooled
  double spectral_radius = 0.0;  // of F, averaged over folds
  std::int64_t regularized = 0;
  bool ok = true;
  std::string error;
};

struct ExperimentReport {
  std::vector<CaseReport> cases;
  int failed() const;
};

/// Contiguous fold boundaries of n columns.
std::vector<Segment> fold_blocks(int n, int folds);

/// k-fold cross-validation: per fold, train POD/ROM/sensors/noise on the
/// remaining folds and score every (p, estimator) case on the held-out one.
std::vector<CaseReport> cross_validate(const SnapshotMatrix& data, int folds, int r, std::span<const int> p_list,
                                       std::span<const Estimator> estimators);

/// Trains once on `train` and scores every case on each of `folds`
/// contiguous blocks of `test`.
std::vector<CaseReport> held_out_evaluate(const SnapshotMatrix& train, const SnapshotMatrix& test, int folds, int r,
                                          std::span<const int> p_list, std::span<const Estimator> estimators);

/// cfg.r, cfg.p, cfg.estimator on the configured (or loaded) dataset.
ExperimentReport cross_validate(const RunConfig& cfg);

/// Grid over sweep.r x sweep.p x estimators, plus sweep.theta as training
/// regimes against sweep.theta_test when that list is set.
ExperimentReport sweep(const RunConfig& cfg);

void write_cases_csv(std::ostream& os, const ExperimentReport& report);
/// Per-fold rows of every case.
void write_folds_csv(std::ostream& os, const ExperimentReport& report);

struct BenchRow {
  int p = 0;
  Estimator estimator = Estimator::Kalman;
  MeanStd piv_us;    // over repeats of the per-test average
  MeanStd est_us;
  MeanStd total_us;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  struct Trend {
    Estimator estimator;
    LinearFit fit;  // total_us mean vs p
  };
  std::vector<Trend> trends;
};

BenchReport bench_step_time(const RunConfig& cfg);
void write_bench_csv(std::ostream& os, const BenchReport& report);

}  // namespace sppiv
