#include "sppiv/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <iomanip>
#include <ostream>

#include "sppiv/error.hpp"

namespace sppiv {

namespace {

using Clock = std::chrono::steady_clock;

double us_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::micro>(b - a).count();
}

struct CaseAccumulator {
  CaseReport report;
  std::vector<double> step_us;
  double rho_sum = 0.0;
  int rho_n = 0;
};

std::vector<CaseAccumulator> make_cases(int r, std::span<const int> p_list, std::span<const Estimator> estimators) {
  std::vector<CaseAccumulator> out;
  for (int p : p_list) {
    for (Estimator e : estimators) {
      CaseAccumulator c;
      c.report.r = r;
      c.report.p = p;
      c.report.estimator = e;
      out.push_back(std::move(c));
    }
  }
  return out;
}

void mark_failed(CaseAccumulator& c, const std::string& why) {
  if (!c.report.ok) return;
  c.report.ok = false;
  c.report.error = why;
}

/// Scores all cases on one held-out block with an already trained model.
void score_block(std::vector<CaseAccumulator>& cases, const TrainedModel& model, const SnapshotMatrix& test) {
  const Eigen::MatrixXd z_ref = project(model.basis, test).Z;
  const Eigen::MatrixXd y = sensor_rows(test, model.sensors);
  for (auto& c : cases) {
    if (!c.report.ok) continue;
    try {
      const int p = c.report.p;
      const LinearRom rom = model.rom(p);
      const Eigen::MatrixXd C = model.sensors.C.topRows(2 * p);
      const EstimateRun run = run_estimator(c.report.estimator, rom, C, y.topRows(2 * p));
      c.report.folds.push_back(score(z_ref, run.Z_hat));
      for (auto ns : run.step_ns) c.step_us.push_back(1e-3 * static_cast<double>(ns));
      c.report.regularized += run.regularized;
      c.rho_sum += model.fit.spectral_radius;
      ++c.rho_n;
    } catch (const Error& e) {
      mark_failed(c, e.what());
    }
  }
}

int p_max_of(std::span<const int> p_list, int n_active) {
  require(!p_list.empty(), ErrorCode::InvalidArgument, "empty p list");
  return std::min(*std::max_element(p_list.begin(), p_list.end()), n_active);
}

std::vector<CaseReport> finish(std::vector<CaseAccumulator>& cases) {
  std::vector<CaseReport> out;
  for (auto& c : cases) {
    CaseReport& r = c.report;
    if (r.ok && !r.folds.empty()) {
      std::vector<double> eps, off, m1, m1o;
      for (const auto& f : r.folds) {
        eps.push_back(f.eps);
        off.push_back(f.eps_offset);
        m1.push_back(f.mode1_mean);
        m1o.push_back(f.mode1_offset);
      }
      r.eps = mean_std(eps);
      r.eps_offset = mean_std(off);
      r.mode1_mean = mean_std(m1);
      r.mode1_offset = mean_std(m1o);
      r.step_us = mean_std(c.step_us);
      r.spectral_radius = c.rho_n ? c.rho_sum / c.rho_n : 0.0;
    } else if (r.ok) {
      r.ok = false;
      r.error = "no folds evaluated";
    }
    out.push_back(std::move(r));
  }
  return out;
}

SnapshotMatrix dataset_snapshots(const RunConfig& cfg) {
  if (!cfg.dataset.empty()) return load_snapshots(cfg.dataset);
  return make_dataset(cfg).measured;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + '"';
}

}  // namespace

int ExperimentReport::failed() const {
  return static_cast<int>(std::count_if(cases.begin(), cases.end(), [](const CaseReport& c) { return !c.ok; }));
}

std::vector<Segment> fold_blocks(int n, int folds) {
  require(folds >= 2, ErrorCode::InvalidArgument, "need at least two folds");
  require(n / folds >= 2, ErrorCode::InsufficientData,
          std::to_string(n) + " snapshots cannot fill " + std::to_string(folds) + " folds");
  std::vector<Segment> out;
  for (int k = 0; k < folds; ++k) {
    const int a = static_cast<int>(static_cast<long long>(k) * n / folds);
    const int b = static_cast<int>(static_cast<long long>(k + 1) * n / folds);
    out.push_back({a, b - a});
  }
  return out;
}

std::vector<CaseReport> cross_validate(const SnapshotMatrix& data, int folds, int r, std::span<const int> p_list,
                                       std::span<const Estimator> estimators) {
  auto cases = make_cases(r, p_list, estimators);
  const auto blocks = fold_blocks(data.snapshots(), folds);
  const int p_max = p_max_of(p_list, data.n_active());

  for (const Segment& held : blocks) {
    try {
      std::vector<SnapshotMatrix> parts;
      std::vector<Segment> segs;
      int at = 0;
      const int before = held.first;
      const int after = data.snapshots() - held.first - held.count;
      if (before > 0) {
        parts.push_back(slice_columns(data, 0, before));
        segs.push_back({at, before});
        at += before;
      }
      if (after > 0) {
        parts.push_back(slice_columns(data, held.first + held.count, after));
        segs.push_back({at, after});
      }
      const SnapshotMatrix train = recenter(concat_columns(parts));
      const SnapshotMatrix test = recenter(slice_columns(data, held.first, held.count), train.mean_field);
      const TrainedModel model = train_model(train, segs, r, p_max);
      score_block(cases, model, test);
    } catch (const Error& e) {
      for (auto& c : cases) mark_failed(c, e.what());
    }
  }
  return finish(cases);
}

std::vector<CaseReport> held_out_evaluate(const SnapshotMatrix& train_raw, const SnapshotMatrix& test_raw, int folds,
                                          int r, std::span<const int> p_list,
                                          std::span<const Estimator> estimators) {
  auto cases = make_cases(r, p_list, estimators);
  try {
    const SnapshotMatrix train = recenter(train_raw);
    const SnapshotMatrix test = recenter(test_raw, train.mean_field);
    const std::array segs{Segment{0, train.snapshots()}};
    const TrainedModel model = train_model(train, segs, r, p_max_of(p_list, train.n_active()));
    for (const Segment& b : fold_blocks(test.snapshots(), folds)) score_block(cases, model, slice_columns(test, b.first, b.count));
  } catch (const Error& e) {
    for (auto& c : cases) mark_failed(c, e.what());
  }
  return finish(cases);
}

ExperimentReport cross_validate(const RunConfig& cfg) {
  const SnapshotMatrix data = dataset_snapshots(cfg);
  const std::array p{cfg.p};
  const std::array e{cfg.estimator};
  ExperimentReport rep;
  rep.cases = cross_validate(data, cfg.folds, cfg.r, p, e);
  for (auto& c : rep.cases) c.theta_train = c.theta_test = cfg.flow.theta;
  return rep;
}

ExperimentReport sweep(const RunConfig& cfg) {
  require(!cfg.sweep_r.empty() && !cfg.sweep_p.empty() && !cfg.sweep_estimators.empty(), ErrorCode::Config,
          "sweep lists must be nonempty");
  ExperimentReport rep;
  auto append = [&](std::vector<CaseReport> cases, double th_train, double th_test) {
    for (auto& c : cases) {
      c.theta_train = th_train;
      c.theta_test = th_test;
      rep.cases.push_back(std::move(c));
    }
  };

  if (cfg.sweep_theta.empty()) {
    const SnapshotMatrix data = dataset_snapshots(cfg);
    for (int r : cfg.sweep_r) append(cross_validate(data, cfg.folds, r, cfg.sweep_p, cfg.sweep_estimators), cfg.flow.theta, cfg.flow.theta);
    return rep;
  }

  // Regime mismatch: one test record at theta_test, training records at each
  // theta from a disjoint time window.
  FlowSpec test_flow = cfg.flow;
  test_flow.theta = cfg.theta_test;
  const SnapshotMatrix test =
      make_dataset(cfg, test_flow, cfg.snapshots, cfg.t_start, derive_seed(cfg.seed, 2)).measured;
  for (double th : cfg.sweep_theta) {
    FlowSpec train_flow = cfg.flow;
    train_flow.theta = th;
    const SnapshotMatrix train = make_dataset(cfg, train_flow, cfg.train_snapshots, cfg.t_start + cfg.test_offset,
                                              derive_seed(cfg.seed, 1))
                                     .measured;
    for (int r : cfg.sweep_r)
      append(held_out_evaluate(train, test, cfg.folds, r, cfg.sweep_p, cfg.sweep_estimators), th, cfg.theta_test);
  }
  return rep;
}

void write_cases_csv(std::ostream& os, const ExperimentReport& report) {
  os << "r,p,theta_train,theta_test,estimator,folds,eps,eps_std,eps_offset,eps_offset_std,mode1_mean,"
        "mode1_offset,spectral_radius,regularized,status,time_mean_us,time_std_us\n";
  os << std::setprecision(17);
  for (const auto& c : report.cases) {
    os << c.r << ',' << c.p << ',' << c.theta_train << ',' << c.theta_test << ',' << to_string(c.estimator) << ','
       << c.folds.size() << ',';
    if (c.ok) {
      os << c.eps.mean << ',' << c.eps.std << ',' << c.eps_offset.mean << ',' << c.eps_offset.std << ','
         << c.mode1_mean.mean << ',' << c.mode1_offset.mean << ',' << c.spectral_radius << ',' << c.regularized
         << ",ok," << c.step_us.mean << ',' << c.step_us.std << '\n';
    } else {
      os << ",,,,,,,," << csv_field("failed: " + c.error) << ",,\n";
    }
  }
}

void write_folds_csv(std::ostream& os, const ExperimentReport& report) {
  os << "r,p,theta_train,theta_test,estimator,fold,eps,eps_offset,mode1_mean,mode1_offset\n";
  os << std::setprecision(17);
  for (const auto& c : report.cases) {
    for (std::size_t k = 0; k < c.folds.size(); ++k) {
      const auto& f = c.folds[k];
      os << c.r << ',' << c.p << ',' << c.theta_train << ',' << c.theta_test << ',' << to_string(c.estimator) << ','
         << k << ',' << f.eps << ',' << f.eps_offset << ',' << f.mode1_mean << ',' << f.mode1_offset << '\n';
    }
  }
}

BenchReport bench_step_time(const RunConfig& cfg) {
  require(!cfg.bench_p.empty() && !cfg.bench_estimators.empty(), ErrorCode::Config, "bench lists must be nonempty");

  // Model trained on field data; timing runs on rendered pairs.
  RunConfig field_cfg = cfg;
  field_cfg.source = DataSource::Field;
  const Dataset train = make_dataset(field_cfg, cfg.flow, cfg.train_snapshots, cfg.t_start, derive_seed(cfg.seed, 1));
  const std::array segs{Segment{0, train.snapshots()}};
  const int p_max = *std::max_element(cfg.bench_p.begin(), cfg.bench_p.end());
  require(p_max <= train.measured.n_active(), ErrorCode::InvalidArgument, "bench p exceeds the number of grid points");
  const TrainedModel model = train_model(train.measured, segs, cfg.r, p_max);
  const auto pairs = render_sequence(cfg, cfg.flow, cfg.bench_pairs, cfg.t_start + cfg.test_offset, derive_seed(cfg.seed, 3));
  const WindowLayout layout = train.layout;

  // One persistent pipeline per (estimator, p); every repeat visits all of
  // them in turn so slow drifts of the machine spread evenly over p.
  struct Config {
    int p = 0;
    Estimator kind = Estimator::Kalman;
    Eigen::VectorXd mean;
    std::unique_ptr<SparsePiv> piv;
    std::unique_ptr<OnlineEstimator> est;
    Eigen::VectorXd obs;
    std::size_t frame = 0;
    std::vector<double> piv_means, est_means, tot_means;
  };
  std::vector<Config> configs;
  for (Estimator kind : cfg.bench_estimators) {
    for (int p : cfg.bench_p) {
      const SensorSet s = model.sensors.prefix(p);
      Config& c = configs.emplace_back();
      c.p = p;
      c.kind = kind;
      c.mean = sensor_mean(model.basis.mean_field, s);
      c.piv = std::make_unique<SparsePiv>(cfg.piv, layout, *model.basis.grid, s.cells);
      c.est = std::make_unique<OnlineEstimator>(kind, model.rom(p), s.C);
      c.obs.resize(2 * p);
    }
  }

  auto run_test = [&](Config& c, int steps, bool record) {
    double piv_us = 0.0, est_us = 0.0;
    for (int k = 0; k < steps; ++k) {
      const ImagePair& pr = pairs[c.frame];
      c.frame = (c.frame + 1) % pairs.size();
      const auto t0 = Clock::now();
      c.obs.noalias() = c.piv->process(pr) - c.mean;
      const auto t1 = Clock::now();
      c.est->step(c.obs);
      const auto t2 = Clock::now();
      piv_us += us_between(t0, t1);
      est_us += us_between(t1, t2);
    }
    if (!record) return;
    c.piv_means.push_back(piv_us / steps);
    c.est_means.push_back(est_us / steps);
    c.tot_means.push_back((piv_us + est_us) / steps);
  };

  for (auto& c : configs) run_test(c, std::min(50, cfg.bench_steps), false);
  for (int rep_i = 0; rep_i < cfg.bench_repeats; ++rep_i) {
    for (auto& c : configs) {
      c.est->reset();
      run_test(c, cfg.bench_steps, true);
    }
  }

  BenchReport rep;
  for (Estimator kind : cfg.bench_estimators) {
    std::vector<double> ps, totals;
    for (const auto& c : configs) {
      if (c.kind != kind) continue;
      BenchRow row{c.p, kind, mean_std(c.piv_means), mean_std(c.est_means), mean_std(c.tot_means)};
      ps.push_back(c.p);
      totals.push_back(row.total_us.mean);
      rep.rows.push_back(row);
    }
    BenchReport::Trend tr{kind, {}};
    if (ps.size() >= 2) tr.fit = fit_line(ps, totals);
    rep.trends.push_back(tr);
  }
  return rep;
}

void write_bench_csv(std::ostream& os, const BenchReport& report) {
  os << "p,estimator,piv_mean_us,piv_std_us,est_mean_us,est_std_us,total_mean_us,total_std_us\n";
  os << std::setprecision(10);
  for (const auto& r : report.rows) {
    os << r.p << ',' << to_string(r.estimator) << ',' << r.piv_us.mean << ',' << r.piv_us.std << ',' << r.est_us.mean
       << ',' << r.est_us.std << ',' << r.total_us.mean << ',' << r.total_us.std << '\n';
  }
}

}  // namespace sppiv
