#include "sppiv/realtime.hpp"

#include <array>
#include <chrono>
#include <condition_variable>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include <pthread.h>
#include <sched.h>

#include "sppiv/error.hpp"

namespace sppiv {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t ns_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count();
}

/// Switches the calling thread to SCHED_FIFO for its lifetime in scope.
class FifoScope {
 public:
  FifoScope(bool want, int below_max) {
    if (!want) return;
    pthread_getschedparam(pthread_self(), &policy_, &param_);
    sched_param sp{};
    sp.sched_priority = sched_get_priority_max(SCHED_FIFO) - below_max;
    active_ = pthread_setschedparam(pthread_self(), SCHED_FIFO, &sp) == 0;
  }
  ~FifoScope() {
    if (active_) pthread_setschedparam(pthread_self(), policy_, &param_);
  }
  FifoScope(const FifoScope&) = delete;
  FifoScope& operator=(const FifoScope&) = delete;
  bool active() const { return active_; }

 private:
  int policy_ = SCHED_OTHER;
  sched_param param_{};
  bool active_ = false;
};

}  // namespace

RealtimeSetup prepare_realtime(const RunConfig& cfg) {
  cfg.validate();
  // The model is trained on full-field PIV of rendered pairs so that it
  // sees the same instrument the consumer uses online.
  RunConfig image_cfg = cfg;
  image_cfg.source = DataSource::Image;
  const Dataset train =
      make_dataset(image_cfg, cfg.flow, cfg.train_snapshots, cfg.t_start, derive_seed(cfg.seed, 1));
  const std::array segs{Segment{0, train.snapshots()}};
  const TrainedModel model = train_model(train.measured, segs, cfg.r, cfg.p);

  RealtimeSetup s;
  s.layout = train.layout;
  s.piv = cfg.piv;
  s.estimator = cfg.estimator;
  s.sensors = model.sensors;
  s.rom = model.rom(cfg.p);
  s.mean_at_sensors = sensor_mean(model.basis.mean_field, s.sensors);
  s.pairs = render_sequence(cfg, cfg.flow, cfg.rt_pairs, cfg.t_start + cfg.test_offset, derive_seed(cfg.seed, 2));

  std::vector<VelocityField> ref;
  ref.reserve(s.pairs.size());
  for (const auto& pr : s.pairs) ref.push_back(full_piv(pr, model.basis.grid, s.layout, s.piv).field);
  s.z_ref = project(model.basis, assemble_with_mean(ref, 1.0 / cfg.sampling_rate, model.basis.mean_field)).Z;
  return s;
}

OfflineResult run_offline(const RealtimeSetup& setup) {
  SparsePiv piv(setup.piv, setup.layout, *setup.sensors.grid, setup.sensors.cells);
  OnlineEstimator est(setup.estimator, setup.rom, setup.sensors.C);
  Eigen::VectorXd obs(setup.sensors.C.rows());
  OfflineResult out;
  out.Z_hat.resize(setup.sensors.C.cols(), static_cast<Eigen::Index>(setup.pairs.size()));
  for (std::size_t i = 0; i < setup.pairs.size(); ++i) {
    obs.noalias() = piv.process(setup.pairs[i]) - setup.mean_at_sensors;
    out.Z_hat.col(static_cast<Eigen::Index>(i)) = est.step(obs);
  }
  out.eps = error_epsilon(setup.z_ref, out.Z_hat);
  return out;
}

RealtimeRun realtime_run(const RealtimeSetup& setup, const RealtimeOptions& opt) {
  const double rate = opt.rate;
  const bool naive = opt.naive;
  require(rate > 0.0, ErrorCode::InvalidArgument, "sampling rate must be > 0");
  const int n = static_cast<int>(setup.pairs.size());
  require(n >= 1, ErrorCode::SourceExhausted, "no image pairs to stream");

  SparsePiv piv(setup.piv, setup.layout, *setup.sensors.grid, setup.sensors.cells);
  OnlineEstimator est(setup.estimator, setup.rom, setup.sensors.C);
  Eigen::VectorXd obs(setup.sensors.C.rows());
  Eigen::MatrixXd z_hat = Eigen::MatrixXd::Zero(setup.sensors.C.cols(), n);
  std::vector<bool> done_frame(static_cast<std::size_t>(n), false);

  RealtimeRun run;
  run.steps.reserve(static_cast<std::size_t>(n));

  std::mutex mu;
  std::condition_variable cv;
  int slot = -1;
  bool finished = false;
  int produced = 0, dropped = 0;

  const auto period = std::chrono::duration<double>(1.0 / rate);
  // Small head start so the consumer is already waiting for frame 0.
  const auto start = Clock::now() + std::chrono::milliseconds(5);
  auto due = [&](int i) { return start + std::chrono::duration_cast<Clock::duration>(i * period); };

  std::exception_ptr consumer_error;
  // The producer outranks the consumer so arrivals stay on schedule.
  FifoScope producer_prio(opt.fifo, 0);
  bool consumer_fifo = false;
  std::thread consumer([&] {
    FifoScope prio(opt.fifo, 1);
    consumer_fifo = prio.active();
    try {
      int last = -1;
      bool swapped = false;
      while (true) {
        int i;
        {
          std::unique_lock lk(mu);
          cv.wait(lk, [&] { return slot >= 0 || finished; });
          if (slot < 0) break;
          i = slot;
          slot = -1;
        }
        const auto t0 = Clock::now();
        for (int k = last + 1; k < i; ++k) {
          est.skip();
          if (naive) swapped = !swapped;
        }
        const ImagePair& pr = setup.pairs[static_cast<std::size_t>(i)];
        const Eigen::VectorXd& y = swapped ? piv.process(pr.b, pr.a, pr.dt_pair) : piv.process(pr);
        obs.noalias() = y - setup.mean_at_sensors;
        z_hat.col(i) = est.step(obs);
        const auto t1 = Clock::now();

        StepRecord rec;
        rec.frame = i;
        rec.t = std::chrono::duration<double>(due(i) - start).count();
        rec.step_ns = ns_between(t0, t1);
        rec.latency_ns = ns_between(due(i), t1);
        rec.missed = t1 > due(i + 1);
        rec.swapped = swapped;
        run.steps.push_back(rec);
        done_frame[static_cast<std::size_t>(i)] = true;
        last = i;
      }
    } catch (...) {
      std::lock_guard lk(mu);
      consumer_error = std::current_exception();
      finished = true;
    }
  });

  for (int i = 0; i < n; ++i) {
    std::this_thread::sleep_until(due(i));
    {
      std::lock_guard lk(mu);
      if (consumer_error) break;
      if (slot >= 0) ++dropped;  // the waiting pair is overwritten
      slot = i;
      ++produced;
    }
    cv.notify_one();
    std::this_thread::yield();
  }
  {
    std::lock_guard lk(mu);
    finished = true;
  }
  cv.notify_one();
  consumer.join();
  if (consumer_error) std::rethrow_exception(consumer_error);

  run.produced = produced;
  run.dropped = dropped;
  run.processed = static_cast<int>(run.steps.size());

  std::vector<double> all, head, tail;
  for (std::size_t k = 0; k < run.steps.size(); ++k) {
    const double us = 1e-3 * static_cast<double>(run.steps[k].step_ns);
    all.push_back(us);
    (static_cast<int>(k) < opt.transient ? head : tail).push_back(us);
    if (run.steps[k].missed) ++run.deadline_misses;
  }
  run.step_us = mean_std(all);
  run.transient_us = mean_std(head);
  run.steady_us = mean_std(tail);

  std::vector<Eigen::Index> cols;
  for (int i = 0; i < n; ++i)
    if (done_frame[static_cast<std::size_t>(i)]) cols.push_back(i);
  if (!cols.empty()) run.eps = error_epsilon(setup.z_ref(Eigen::all, cols), z_hat(Eigen::all, cols));
  run.success =
      run.processed == run.produced && run.produced == n && run.eps <= opt.eps_factor * opt.eps_offline;
  run.fifo = producer_prio.active() && consumer_fifo;
  return run;
}

RealtimeReport realtime_sim(const RealtimeSetup& setup, const RunConfig& cfg) {
  RealtimeReport rep;
  rep.eps_offline = run_offline(setup).eps;
  std::vector<double> means;
  rep.success = true;
  RealtimeOptions opt;
  opt.rate = cfg.sampling_rate;
  opt.naive = cfg.rt_naive;
  opt.transient = cfg.rt_transient;
  opt.eps_offline = rep.eps_offline;
  opt.eps_factor = cfg.rt_eps_factor;
  opt.fifo = cfg.rt_fifo;
  for (int k = 0; k < cfg.rt_runs; ++k) {
    rep.runs.push_back(realtime_run(setup, opt));
    means.push_back(rep.runs.back().step_us.mean);
    rep.success = rep.success && rep.runs.back().success;
  }
  rep.run_step_us = mean_std(means);
  return rep;
}

RealtimeReport realtime_sim(const RunConfig& cfg) { return realtime_sim(prepare_realtime(cfg), cfg); }

void write_realtime_csv(std::ostream& os, const RealtimeReport& report) {
  os << "run,produced,processed,dropped,deadline_misses,eps,eps_offline,success,step_mean_us,step_std_us,"
        "transient_mean_us,steady_mean_us,fifo\n";
  os << std::setprecision(12);
  for (std::size_t k = 0; k < report.runs.size(); ++k) {
    const auto& r = report.runs[k];
    os << k << ',' << r.produced << ',' << r.processed << ',' << r.dropped << ',' << r.deadline_misses << ','
       << r.eps << ',' << report.eps_offline << ',' << (r.success ? 1 : 0) << ',' << r.step_us.mean << ','
       << r.step_us.std << ',' << r.transient_us.mean << ',' << r.steady_us.mean << ',' << (r.fifo ? 1 : 0)
       << '\n';
  }
}

void write_realtime_steps_csv(std::ostream& os, const RealtimeRun& run) {
  os << "frame,t,step_time_ns,latency_ns,deadline_missed,swapped\n";
  os << std::setprecision(12);
  for (const auto& s : run.steps)
    os << s.frame << ',' << s.t << ',' << s.step_ns << ',' << s.latency_ns << ',' << (s.missed ? 1 : 0) << ','
       << (s.swapped ? 1 : 0) << '\n';
}

}  // namespace sppiv
