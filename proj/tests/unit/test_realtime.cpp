#include <doctest.h>

#include <sstream>

#include "sppiv/error.hpp"
#include "sppiv/realtime.hpp"

using namespace sppiv;

namespace {

const RealtimeSetup& setup() {
  static const RealtimeSetup s = [] {
    RunConfig cfg;
    cfg.r = 6;
    cfg.p = 30;
    cfg.train_snapshots = 300;
    cfg.rt_pairs = 40;
    return prepare_realtime(cfg);
  }();
  return s;
}

RealtimeOptions options(double rate, double eps_offline) {
  RealtimeOptions o;
  o.rate = rate;
  o.eps_offline = eps_offline;
  o.transient = 5;
  return o;
}

}  // namespace

TEST_CASE("setup shapes") {
  const RealtimeSetup& s = setup();
  CHECK(s.pairs.size() == 40);
  CHECK(s.z_ref.rows() == 6);
  CHECK(s.z_ref.cols() == 40);
  CHECK(s.sensors.points() == 30);
  CHECK(s.rom.points() == 30);
  CHECK(s.mean_at_sensors.size() == 60);
}

TEST_CASE("slack deadline: every pair processed, same numbers as offline") {
  const RealtimeSetup& s = setup();
  const OfflineResult off = run_offline(s);
  CHECK(off.eps > 0.0);
  CHECK(off.eps < 1.0);
  const RealtimeRun run = realtime_run(s, options(100.0, off.eps));
  CHECK(run.produced == 40);
  CHECK(run.processed == 40);
  CHECK(run.dropped == 0);
  CHECK(run.deadline_misses == 0);
  CHECK(run.eps == doctest::Approx(off.eps).epsilon(1e-12));
  CHECK(run.success);
  CHECK(run.transient_us.n == 5);
  CHECK(run.steady_us.n == 35);
  for (std::size_t k = 0; k < run.steps.size(); ++k) {
    CHECK(run.steps[k].frame == static_cast<int>(k));
    CHECK_FALSE(run.steps[k].swapped);
    CHECK(run.steps[k].latency_ns >= run.steps[k].step_ns);
  }
}

TEST_CASE("one pair per second never misses") {
  RealtimeSetup s = setup();
  s.pairs.resize(3);
  s.z_ref = s.z_ref.leftCols(3).eval();
  const RealtimeRun run = realtime_run(s, options(1.0, run_offline(s).eps));
  CHECK(run.processed == 3);
  CHECK(run.deadline_misses == 0);
  CHECK(run.success);
}

TEST_CASE("an impossible rate drops frames and fails honestly") {
  const RealtimeSetup& s = setup();
  for (bool fifo : {true, false}) {
    CAPTURE(fifo);
    RealtimeOptions o = options(1e6, run_offline(s).eps);
    o.fifo = fifo;
    const RealtimeRun run = realtime_run(s, o);
    CHECK(run.produced == 40);
    CHECK(run.produced == run.processed + run.dropped);
    CHECK(run.processed >= 1);
    CHECK(run.success == (run.dropped == 0));
    for (std::size_t k = 1; k < run.steps.size(); ++k) CHECK(run.steps[k].frame > run.steps[k - 1].frame);
    CHECK(std::isfinite(run.eps));
    if (!fifo) CHECK_FALSE(run.fifo);
    // On one core only a preempting producer can overwrite a waiting pair.
    if (run.fifo) {
      CHECK(run.dropped > 0);
      CHECK_FALSE(run.success);
    }
  }
}

TEST_CASE("naive mode swaps the frame order after a drop") {
  const RealtimeSetup& s = setup();
  RealtimeOptions o = options(1e6, run_offline(s).eps);
  o.naive = true;
  const RealtimeRun fast = realtime_run(s, o);
  if (!fast.fifo) return;  // drops need a preempting producer
  REQUIRE(fast.dropped > 0);
  // The swap state flips once per skipped frame.
  int last = -1;
  bool swapped = false;
  for (const StepRecord& st : fast.steps) {
    for (int k = last + 1; k < st.frame; ++k) swapped = !swapped;
    CHECK(st.swapped == swapped);
    last = st.frame;
  }

  o.rate = 100.0;
  const RealtimeRun slow = realtime_run(s, o);
  CHECK(slow.dropped == 0);
  for (const StepRecord& st : slow.steps) CHECK_FALSE(st.swapped);
}

TEST_CASE("errors and report CSV") {
  RealtimeSetup empty = setup();
  empty.pairs.clear();
  try {
    realtime_run(empty, options(10.0, 1.0));
    FAIL("empty source accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SourceExhausted);
  }
  CHECK_THROWS_AS(realtime_run(setup(), options(0.0, 1.0)), Error);

  RunConfig cfg;
  cfg.sampling_rate = 200.0;
  cfg.rt_runs = 2;
  const RealtimeReport rep = realtime_sim(setup(), cfg);
  REQUIRE(rep.runs.size() == 2);
  CHECK(rep.run_step_us.n == 2);
  std::ostringstream os;
  write_realtime_csv(os, rep);
  const std::string csv = os.str();
  CHECK(csv.substr(0, csv.find('\n')) ==
        "run,produced,processed,dropped,deadline_misses,eps,eps_offline,success,step_mean_us,step_std_us,"
        "transient_mean_us,steady_mean_us,fifo");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  std::ostringstream steps;
  write_realtime_steps_csv(steps, rep.runs[0]);
  const std::string st = steps.str();
  CHECK(std::count(st.begin(), st.end(), '\n') == 41);
}
