// sppiv: command-line front end. Every subcommand reads an optional TOML
// config, applies --set/flag overrides and writes CSV/binary artefacts to
// --out-dir plus a JSON summary on stdout.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sppiv/binary_io.hpp"
#include "sppiv/config.hpp"
#include "sppiv/error.hpp"
#include "sppiv/experiments.hpp"
#include "sppiv/pipeline.hpp"
#include "sppiv/realtime.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sppiv;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> r, p;
  std::optional<std::string> estimator, dataset, model, sensors, source;
  std::optional<double> rate;
  std::string frames;  // estimate: PGM directory
  bool random = false; // select: uniform random placement
};

RunConfig build_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) apply_table(cfg, parse_toml_file(o.config));
  for (const auto& kv : o.sets) {
    auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, ErrorCode::Config, "--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), parse_toml_value(kv.substr(eq + 1)));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.r) cfg.r = *o.r;
  if (o.p) cfg.p = *o.p;
  if (o.estimator) cfg.estimator = estimator_from_string(*o.estimator);
  if (o.dataset) cfg.dataset = *o.dataset;
  if (o.model) cfg.model = *o.model;
  if (o.sensors) cfg.sensors = *o.sensors;
  if (o.source) apply_setting(cfg, "data.source", *o.source);
  if (o.rate) cfg.sampling_rate = *o.rate;
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  return cfg;
}

fs::path existing(const fs::path& p, const std::string& what) {
  require(fs::exists(p), ErrorCode::Io, what + " not found: " + p.string());
  return p;
}

fs::path dataset_path(const RunConfig& cfg) {
  return existing(cfg.dataset.empty() ? cfg.out_dir / "dataset.snp" : cfg.dataset, "dataset");
}
fs::path model_dir(const RunConfig& cfg) { return cfg.model.empty() ? cfg.out_dir : cfg.model; }

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

json cases_json(const ExperimentReport& rep) {
  json out = json::array();
  for (const auto& c : rep.cases) {
    json j = {{"r", c.r}, {"p", c.p}, {"estimator", to_string(c.estimator)}, {"theta_train", c.theta_train},
              {"theta_test", c.theta_test}, {"ok", c.ok}};
    if (c.ok) {
      j["eps"] = mean_std_json(c.eps);
      j["eps_offset"] = mean_std_json(c.eps_offset);
      j["step_us"] = mean_std_json(c.step_us);
    } else {
      j["error"] = c.error;
    }
    out.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------

json cmd_synth(const RunConfig& cfg) {
  const bool images = cfg.source == DataSource::Image;
  Dataset d = make_dataset(cfg, cfg.flow, cfg.snapshots, cfg.t_start, cfg.seed, images);
  save_snapshots(cfg.out_dir / "dataset.snp", d.measured);
  save_snapshots(cfg.out_dir / "truth.snp", d.truth);
  write_field_csv(cfg.out_dir / "mean_field.csv", d.measured.mean_field);
  json j = {{"snapshots", d.snapshots()},
            {"nx", d.layout.nx},
            {"ny", d.layout.ny},
            {"n_active", d.measured.n_active()},
            {"dataset", (cfg.out_dir / "dataset.snp").string()},
            {"truth", (cfg.out_dir / "truth.snp").string()}};
  if (images) {
    const fs::path dir = cfg.out_dir / "frames";
    fs::create_directories(dir);
    char name[64];
    for (std::size_t k = 0; k < d.pairs.size(); ++k) {
      std::snprintf(name, sizeof name, "frame_%06zu_a.pgm", k);
      write_pgm(dir / name, d.pairs[k].a);
      std::snprintf(name, sizeof name, "frame_%06zu_b.pgm", k);
      write_pgm(dir / name, d.pairs[k].b);
    }
    j["frames"] = dir.string();
  }
  return j;
}

json cmd_train(const RunConfig& cfg) {
  const SnapshotMatrix data = recenter(load_snapshots(dataset_path(cfg)));
  const std::array segs{Segment{0, data.snapshots()}};
  const TrainedModel m = cfg.sensors.empty()
                             ? train_model(data, segs, cfg.r, cfg.p)
                             : train_model_with_cells(data, segs, cfg.r,
                                                      read_sensor_cells(existing(cfg.sensors, "sensor file")));
  const int p = std::min(cfg.p, m.sensors.points());
  const LinearRom rom = m.rom(p);
  const fs::path dir = cfg.out_dir;
  save_basis(dir / "basis.pod", m.basis);
  save_rom(dir / "model.rom", rom);
  write_sensors_csv(dir / "sensors.csv", m.sensors.prefix(p));
  {
    auto os = io::open_out(dir / "spectrum.csv", false);
    write_spectrum_csv(os, m.basis);
  }
  {
    auto os = io::open_out(dir / "eigenvalues.csv", false);
    write_eigen_csv(os, m.fit.F);
  }
  return {{"r", m.basis.rank()},
          {"p", p},
          {"energy_ratio", energy_ratio(m.basis, m.basis.rank())},
          {"spectral_radius", m.fit.spectral_radius},
          {"numerical_rank", m.fit.numerical_rank},
          {"underdetermined", m.fit.underdetermined},
          {"basis", (dir / "basis.pod").string()},
          {"rom", (dir / "model.rom").string()},
          {"sensors", (dir / "sensors.csv").string()}};
}

json cmd_select(const RunConfig& cfg, bool random) {
  PodBasis basis = load_basis(existing(model_dir(cfg) / "basis.pod", "basis"));
  if (cfg.r < basis.rank()) basis = truncate(basis, cfg.r);
  const SensorSet s = random ? random_select(basis, cfg.p, cfg.seed) : greedy_select(basis, cfg.p);
  write_sensors_csv(cfg.out_dir / "sensors.csv", s);
  json cells = json::array();
  for (int c : s.cells) cells.push_back(c);
  return {{"p", s.points()}, {"method", random ? "random" : "greedy"}, {"cells", cells},
          {"objective", s.objective.empty() ? 0.0 : s.objective.back()}};
}

json cmd_estimate(const RunConfig& cfg, const std::string& frames) {
  const fs::path dir = model_dir(cfg);
  const PodBasis basis = load_basis(existing(dir / "basis.pod", "basis"));
  const LinearRom rom = load_rom(existing(dir / "model.rom", "model"));
  const fs::path sensor_file = cfg.sensors.empty() ? dir / "sensors.csv" : cfg.sensors;
  const SensorSet s = sensors_from_cells(basis, read_sensor_cells(existing(sensor_file, "sensor file")));
  require(rom.points() == s.points() && rom.rank() == basis.rank(), ErrorCode::DimensionMismatch,
          "model, basis and sensor file disagree on r or p");

  const SnapshotMatrix data = recenter(load_snapshots(dataset_path(cfg)), basis.mean_field);
  const Eigen::MatrixXd z_ref = project(basis, data).Z;
  const int n = data.snapshots();

  OnlineEstimator est(cfg.estimator, rom, s.C);
  Eigen::MatrixXd z_hat(basis.rank(), n);
  std::vector<std::int64_t> ns(static_cast<std::size_t>(n));
  if (frames.empty()) {
    const Eigen::MatrixXd y = sensor_rows(data, s);
    for (int j = 0; j < n; ++j) {
      z_hat.col(j) = est.step(y.col(j));
      ns[static_cast<std::size_t>(j)] = est.last_step_ns();
    }
  } else {
    const WindowLayout layout = layout_of(cfg);
    SparsePiv piv(cfg.piv, layout, *basis.grid, s.cells);
    const Eigen::VectorXd mean = sensor_mean(basis.mean_field, s);
    char a[64], b[64];
    for (int j = 0; j < n; ++j) {
      std::snprintf(a, sizeof a, "frame_%06d_a.pgm", j);
      std::snprintf(b, sizeof b, "frame_%06d_b.pgm", j);
      const ParticleImage ia = read_pgm(existing(fs::path(frames) / a, "frame"));
      const ParticleImage ib = read_pgm(existing(fs::path(frames) / b, "frame"));
      const auto t0 = std::chrono::steady_clock::now();
      const Eigen::VectorXd y = piv.process(ia, ib, cfg.dt_pair) - mean;
      z_hat.col(j) = est.step(y);
      ns[static_cast<std::size_t>(j)] =
          std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
    }
  }

  const double budget_ns = 1e9 / cfg.sampling_rate;
  int misses = 0;
  auto os = io::open_out(cfg.out_dir / "estimate.csv", false);
  os << "step,t";
  for (int i = 1; i <= basis.rank(); ++i) os << ",z_" << i;
  os << ",step_time_ns,deadline_missed\n" << std::setprecision(17);
  for (int j = 0; j < n; ++j) {
    const bool missed = static_cast<double>(ns[static_cast<std::size_t>(j)]) > budget_ns;
    misses += missed;
    os << j << ',' << j * data.dt;
    for (int i = 0; i < basis.rank(); ++i) os << ',' << z_hat(i, j);
    os << ',' << ns[static_cast<std::size_t>(j)] << ',' << (missed ? 1 : 0) << '\n';
  }
  return {{"steps", n},
          {"estimator", to_string(cfg.estimator)},
          {"eps", error_epsilon(z_ref, z_hat)},
          {"eps_offset", error_offset_normalized(z_ref, z_hat)},
          {"deadline_misses", misses},
          {"output", (cfg.out_dir / "estimate.csv").string()}};
}

json cmd_validate(const RunConfig& cfg) {
  const ExperimentReport rep = cross_validate(cfg);
  {
    auto os = io::open_out(cfg.out_dir / "validate.csv", false);
    write_cases_csv(os, rep);
  }
  {
    auto os = io::open_out(cfg.out_dir / "validate_folds.csv", false);
    write_folds_csv(os, rep);
  }
  return {{"folds", cfg.folds}, {"cases", cases_json(rep)}};
}

json cmd_sweep(const RunConfig& cfg) {
  const ExperimentReport rep = sweep(cfg);
  {
    auto os = io::open_out(cfg.out_dir / "sweep.csv", false);
    write_cases_csv(os, rep);
  }
  {
    auto os = io::open_out(cfg.out_dir / "sweep_folds.csv", false);
    write_folds_csv(os, rep);
  }
  return {{"cases", rep.cases.size()}, {"failed", rep.failed()}, {"output", (cfg.out_dir / "sweep.csv").string()}};
}

json cmd_bench(const RunConfig& cfg) {
  const BenchReport rep = bench_step_time(cfg);
  {
    auto os = io::open_out(cfg.out_dir / "bench.csv", false);
    write_bench_csv(os, rep);
  }
  json trends = json::array();
  for (const auto& t : rep.trends)
    trends.push_back({{"estimator", to_string(t.estimator)},
                      {"slope_us_per_point", t.fit.slope},
                      {"intercept_us", t.fit.intercept},
                      {"r_squared", t.fit.r_squared}});
  return {{"rows", rep.rows.size()}, {"trends", trends}, {"output", (cfg.out_dir / "bench.csv").string()}};
}

json cmd_rtsim(const RunConfig& cfg) {
  const RealtimeReport rep = realtime_sim(cfg);
  {
    auto os = io::open_out(cfg.out_dir / "rtsim.csv", false);
    write_realtime_csv(os, rep);
  }
  if (!rep.runs.empty()) {
    auto os = io::open_out(cfg.out_dir / "rtsim_steps.csv", false);
    write_realtime_steps_csv(os, rep.runs.back());
  }
  json runs = json::array();
  for (const auto& r : rep.runs)
    runs.push_back({{"produced", r.produced},
                    {"processed", r.processed},
                    {"dropped", r.dropped},
                    {"deadline_misses", r.deadline_misses},
                    {"eps", r.eps},
                    {"step_us", mean_std_json(r.step_us)},
                    {"transient_us", mean_std_json(r.transient_us)},
                    {"steady_us", mean_std_json(r.steady_us)},
                    {"success", r.success},
                    {"fifo", r.fifo}});
  return {{"rate_hz", cfg.sampling_rate}, {"r", cfg.r},          {"p", cfg.p},
          {"eps_offline", rep.eps_offline}, {"runs", runs},        {"step_us_across_runs", mean_std_json(rep.run_step_us)},
          {"success", rep.success}};
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse processing PIV toolkit"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config, "TOML run configuration");
  app.add_option("--set", o.sets, "Override a config key (table.key=value)");
  app.add_option("--seed", o.seed, "Master random seed");
  app.add_option("--out-dir", o.out_dir, "Output directory");

  auto model_flags = [&](CLI::App* sub) {
    sub->add_option("-r,--modes", o.r, "POD modes");
    sub->add_option("-p,--points", o.p, "Processing points");
    sub->add_option("--estimator", o.estimator, "kalman | pinv | kalman-steady");
    sub->add_option("--dataset", o.dataset, "Snapshot container");
    sub->add_option("--model", o.model, "Directory with basis.pod and model.rom");
    sub->add_option("--sensors", o.sensors, "Sensor CSV");
    sub->add_option("--source", o.source, "field | image");
    sub->add_option("--rate", o.rate, "Sampling rate, Hz");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "Fit POD basis, linear model and noise");
  auto* select = app.add_subcommand("select", "Place processing points on a basis");
  auto* estimate = app.add_subcommand("estimate", "Offline estimation run");
  auto* validate = app.add_subcommand("validate", "k-fold cross-validation");
  auto* sweep_cmd = app.add_subcommand("sweep", "Parameter sweep over r, p, estimator and regime");
  auto* bench = app.add_subcommand("bench", "Per-step timing benchmark");
  auto* rtsim = app.add_subcommand("rtsim", "Paced real-time simulation");
  for (auto* s : {synth, train, select, estimate, validate, sweep_cmd, bench, rtsim}) {
    model_flags(s);
    s->fallthrough();
  }
  select->add_flag("--random", o.random, "Uniform random placement instead of greedy");
  estimate->add_option("--frames", o.frames, "Directory of frame_%06d_{a,b}.pgm pairs (sparse PIV path)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 64;
  }

  try {
    const RunConfig cfg = build_config(o);
    json out;
    if (*synth) out = cmd_synth(cfg);
    else if (*train) out = cmd_train(cfg);
    else if (*select) out = cmd_select(cfg, o.random);
    else if (*estimate) out = cmd_estimate(cfg, o.frames);
    else if (*validate) out = cmd_validate(cfg);
    else if (*sweep_cmd) out = cmd_sweep(cfg);
    else if (*bench) out = cmd_bench(cfg);
    else if (*rtsim) out = cmd_rtsim(cfg);
    std::cout << out.dump(2) << std::endl;
    return 0;
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}
