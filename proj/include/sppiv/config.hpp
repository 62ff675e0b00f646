#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "sppiv/piv.hpp"
#include "sppiv/synth.hpp"

namespace sppiv {

// ---------------------------------------------------------------------------
// Minimal TOML reader: [tables], dotted keys, strings, integers, floats,
// booleans and flat arrays. Keys are flattened to "table.key".

using TomlArray = std::vector<std::variant<std::int64_t, double, std::string>>;
using TomlValue = std::variant<bool, std::int64_t, double, std::string, TomlArray>;
using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::filesystem::path& path);
/// Parses a single TOML value (used for `key=value` command-line overrides).
/// Bare words that are not valid TOML values are taken as strings.
TomlValue parse_toml_value(const std::string& text);

// ---------------------------------------------------------------------------

enum class Estimator { Kalman, Pinv, KalmanSteady };
Estimator estimator_from_string(const std::string& s);
const char* to_string(Estimator e);

enum class DataSource { Field, Image };

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";

  // paths
  std::filesystem::path dataset;
  std::filesystem::path model;
  std::filesystem::path sensors;

  // model
  int r = 10;
  int p = 20;
  Estimator estimator = Estimator::Kalman;

  // data
  DataSource source = DataSource::Field;
  int snapshots = 5000;
  double sampling_rate = 2000.0;
  double field_noise = 0.2;  // std of additive measurement noise (field source)
  double dt_pair = 80e-6;
  double t_start = 0.0;
  int train_snapshots = 3000;
  int test_snapshots = 1000;
  double test_offset = 10.0;  // time shift of the held-out regime record

  FlowSpec flow;
  RenderConfig render;
  PivConfig piv{32, 0.75, 6250.0, 0, 0, 0};
  std::vector<double> mask_rect;  // px: x0, y0, x1, y1; window centres inside are masked

  int folds = 5;

  // sweep
  std::vector<int> sweep_r{10};
  std::vector<int> sweep_p{5, 10, 15, 20, 25, 30};
  std::vector<double> sweep_theta;
  double theta_test = 0.0;
  std::vector<Estimator> sweep_estimators{Estimator::Kalman, Estimator::Pinv};

  // bench
  int bench_steps = 1000;
  int bench_repeats = 100;
  std::vector<int> bench_p{5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::vector<Estimator> bench_estimators{Estimator::Kalman, Estimator::KalmanSteady, Estimator::Pinv};
  int bench_pairs = 32;

  // rtsim
  int rt_pairs = 1914;
  int rt_runs = 3;
  bool rt_naive = false;
  int rt_transient = 100;
  double rt_eps_factor = 1.5;
  bool rt_fifo = true;

  void validate() const;
  /// Render settings with the PIV magnification applied.
  RenderConfig render_config() const;
};

/// Applies one flattened key; throws Error(Config) for unknown keys or
/// type mismatches.
void apply_setting(RunConfig& cfg, const std::string& key, const TomlValue& value);
void apply_table(RunConfig& cfg, const TomlTable& table);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace sppiv
