#include "sppiv/config.hpp"

#include <charconv>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "sppiv/error.hpp"

namespace sppiv {

namespace {

class TomlParser {
 public:
  TomlParser(const std::string& text) : s_(text) {}

  TomlTable parse() {
    TomlTable out;
    std::string prefix;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++i_;
        skip_ws();
        prefix = dotted_key();
        skip_ws();
        expect(']');
        prefix += '.';
      } else {
        std::string key = prefix + dotted_key();
        skip_ws();
        expect('=');
        skip_ws();
        if (out.count(key)) error("duplicate key '" + key + "'");
        out[key] = value();
      }
      end_of_line();
    }
    return out;
  }

  TomlValue single_value() {
    skip_ws();
    TomlValue v = value();
    skip_ws();
    if (!eof()) error("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::Config, "toml line " + std::to_string(line_) + ": " + what);
  }
  bool eof() const { return i_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[i_]; }
  void expect(char c) {
    if (peek() != c) error(std::string("expected '") + c + "'");
    ++i_;
  }
  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++i_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++i_;
  }
  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r') ++i_;
      if (peek() != '\n') return;
      ++i_;
      ++line_;
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++i_;
    if (eof()) return;
    if (peek() != '\n') error("expected end of line");
    ++i_;
    ++line_;
  }
  // Whitespace, newlines and comments inside arrays.
  void skip_array_space() {
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r') {
        ++i_;
      } else if (c == '\n') {
        ++i_;
        ++line_;
      } else if (c == '#') {
        skip_comment();
      } else {
        return;
      }
    }
  }

  std::string bare_key() {
    std::size_t start = i_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++i_;
    if (start == i_) {
      if (peek() == '"') return basic_string();
      error("expected key");
    }
    return s_.substr(start, i_ - start);
  }
  std::string dotted_key() {
    std::string k = bare_key();
    while (true) {
      skip_ws();
      if (peek() != '.') return k;
      ++i_;
      skip_ws();
      k += '.' + bare_key();
    }
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') error("unterminated string");
      char c = s_[i_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) error("unterminated escape");
      char e = s_[i_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: error(std::string("unsupported escape \\") + e);
      }
    }
  }
  std::string literal_string() {
    expect('\'');
    std::size_t end = s_.find_first_of("'\n", i_);
    if (end == std::string::npos || s_[end] != '\'') error("unterminated string");
    std::string out = s_.substr(i_, end - i_);
    i_ = end + 1;
    return out;
  }

  std::variant<std::int64_t, double> number() {
    std::size_t start = i_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string_view("+-._").find(peek()) !=
                                                                              std::string_view::npos))
      ++i_;
    std::string tok = s_.substr(start, i_ - start);
    std::erase(tok, '_');
    if (tok.empty()) error("expected value");
    const char* b = tok.data();
    const char* e = b + tok.size();
    if (*b == '+') ++b;
    bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e) return v;
    }
    double d = 0.0;
    auto [p, ec] = std::from_chars(b, e, d);
    if (ec != std::errc() || p != e) error("bad value '" + tok + "'");
    return d;
  }

  TomlValue value() {
    char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (s_.compare(i_, 4, "true") == 0 && !std::isalnum(static_cast<unsigned char>(i_ + 4 < s_.size() ? s_[i_ + 4] : ' '))) {
      i_ += 4;
      return true;
    }
    if (s_.compare(i_, 5, "false") == 0 && !std::isalnum(static_cast<unsigned char>(i_ + 5 < s_.size() ? s_[i_ + 5] : ' '))) {
      i_ += 5;
      return false;
    }
    auto n = number();
    if (auto* iv = std::get_if<std::int64_t>(&n)) return *iv;
    return std::get<double>(n);
  }

  TomlArray array() {
    expect('[');
    TomlArray out;
    while (true) {
      skip_array_space();
      if (peek() == ']') {
        ++i_;
        return out;
      }
      char c = peek();
      if (c == '"') {
        out.emplace_back(basic_string());
      } else if (c == '\'') {
        out.emplace_back(literal_string());
      } else if (c == '[') {
        error("nested arrays are not supported");
      } else {
        auto n = number();
        if (auto* iv = std::get_if<std::int64_t>(&n))
          out.emplace_back(*iv);
        else
          out.emplace_back(std::get<double>(n));
      }
      skip_array_space();
      if (peek() == ',') {
        ++i_;
      } else if (peek() != ']') {
        error("expected ',' or ']' in array");
      }
    }
  }

  const std::string& s_;
  std::size_t i_ = 0;
  int line_ = 1;
};

// ---- typed accessors ------------------------------------------------------

double as_double(const TomlValue& v, const std::string& key) {
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  fail(ErrorCode::Config, key + ": expected a number");
}

std::int64_t as_int(const TomlValue& v, const std::string& key) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
  fail(ErrorCode::Config, key + ": expected an integer");
}

bool as_bool(const TomlValue& v, const std::string& key) {
  if (auto* b = std::get_if<bool>(&v)) return *b;
  fail(ErrorCode::Config, key + ": expected true or false");
}

std::string as_string(const TomlValue& v, const std::string& key) {
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  fail(ErrorCode::Config, key + ": expected a string");
}

// Scalars are accepted where a list is expected.
TomlArray as_array(const TomlValue& v) {
  if (auto* a = std::get_if<TomlArray>(&v)) return *a;
  if (auto* i = std::get_if<std::int64_t>(&v)) return {*i};
  if (auto* d = std::get_if<double>(&v)) return {*d};
  if (auto* s = std::get_if<std::string>(&v)) {
    // "a,b,c" from the command line
    TomlArray out;
    std::stringstream ss(*s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      TomlValue parsed = parse_toml_value(item);
      if (auto* pi = std::get_if<std::int64_t>(&parsed))
        out.emplace_back(*pi);
      else if (auto* pd = std::get_if<double>(&parsed))
        out.emplace_back(*pd);
      else if (auto* ps = std::get_if<std::string>(&parsed))
        out.emplace_back(*ps);
    }
    return out;
  }
  return {};
}

std::vector<double> as_doubles(const TomlValue& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& e : as_array(v)) {
    if (auto* d = std::get_if<double>(&e))
      out.push_back(*d);
    else if (auto* i = std::get_if<std::int64_t>(&e))
      out.push_back(static_cast<double>(*i));
    else
      fail(ErrorCode::Config, key + ": expected numbers");
  }
  return out;
}

std::vector<int> as_ints(const TomlValue& v, const std::string& key) {
  std::vector<int> out;
  for (const auto& e : as_array(v)) {
    auto* i = std::get_if<std::int64_t>(&e);
    if (!i) fail(ErrorCode::Config, key + ": expected integers");
    out.push_back(static_cast<int>(*i));
  }
  return out;
}

std::vector<Estimator> as_estimators(const TomlValue& v, const std::string& key) {
  std::vector<Estimator> out;
  for (const auto& e : as_array(v)) {
    auto* s = std::get_if<std::string>(&e);
    if (!s) fail(ErrorCode::Config, key + ": expected estimator names");
    out.push_back(estimator_from_string(*s));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const TomlValue&, const std::string&)>;

template <class T>
Setter num(T RunConfig::*m) {
  return [m](RunConfig& c, const TomlValue& v, const std::string& k) {
    if constexpr (std::is_floating_point_v<T>)
      c.*m = as_double(v, k);
    else
      c.*m = static_cast<T>(as_int(v, k));
  };
}
template <class T>
Setter flow(T FlowSpec::*m) {
  return [m](RunConfig& c, const TomlValue& v, const std::string& k) {
    if constexpr (std::is_floating_point_v<T>)
      c.flow.*m = as_double(v, k);
    else
      c.flow.*m = static_cast<T>(as_int(v, k));
  };
}
template <class T>
Setter render(T RenderConfig::*m) {
  return [m](RunConfig& c, const TomlValue& v, const std::string& k) {
    if constexpr (std::is_floating_point_v<T>)
      c.render.*m = as_double(v, k);
    else
      c.render.*m = static_cast<T>(as_int(v, k));
  };
}
template <class T>
Setter piv(T PivConfig::*m) {
  return [m](RunConfig& c, const TomlValue& v, const std::string& k) {
    if constexpr (std::is_floating_point_v<T>)
      c.piv.*m = as_double(v, k);
    else
      c.piv.*m = static_cast<T>(as_int(v, k));
  };
}
Setter path(std::filesystem::path RunConfig::*m) {
  return [m](RunConfig& c, const TomlValue& v, const std::string& k) { c.*m = as_string(v, k); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", num(&RunConfig::seed)},
      {"out_dir", path(&RunConfig::out_dir)},

      {"paths.dataset", path(&RunConfig::dataset)},
      {"paths.model", path(&RunConfig::model)},
      {"paths.sensors", path(&RunConfig::sensors)},
      {"paths.out_dir", path(&RunConfig::out_dir)},

      {"model.r", num(&RunConfig::r)},
      {"model.p", num(&RunConfig::p)},
      {"model.estimator",
       [](RunConfig& c, const TomlValue& v, const std::string& k) { c.estimator = estimator_from_string(as_string(v, k)); }},

      {"data.source",
       [](RunConfig& c, const TomlValue& v, const std::string& k) {
         std::string s = as_string(v, k);
         if (s == "field")
           c.source = DataSource::Field;
         else if (s == "image")
           c.source = DataSource::Image;
         else
           fail(ErrorCode::Config, k + ": expected \"field\" or \"image\"");
       }},
      {"data.snapshots", num(&RunConfig::snapshots)},
      {"data.sampling_rate", num(&RunConfig::sampling_rate)},
      {"data.field_noise", num(&RunConfig::field_noise)},
      {"data.dt_pair", num(&RunConfig::dt_pair)},
      {"data.t_start", num(&RunConfig::t_start)},
      {"data.train_snapshots", num(&RunConfig::train_snapshots)},
      {"data.test_snapshots", num(&RunConfig::test_snapshots)},
      {"data.test_offset", num(&RunConfig::test_offset)},

      {"flow.kind",
       [](RunConfig& c, const TomlValue& v, const std::string& k) { c.flow.kind = flow_kind_from_string(as_string(v, k)); }},
      {"flow.U_inf", flow(&FlowSpec::U_inf)},
      {"flow.theta", flow(&FlowSpec::theta)},
      {"flow.y0", flow(&FlowSpec::y0)},
      {"flow.delta", flow(&FlowSpec::delta)},
      {"flow.y0_per_theta", flow(&FlowSpec::y0_per_theta)},
      {"flow.delta_per_theta", flow(&FlowSpec::delta_per_theta)},
      {"flow.harmonics", flow(&FlowSpec::harmonics)},
      {"flow.amplitude", flow(&FlowSpec::amplitude)},
      {"flow.amplitude_decay", flow(&FlowSpec::amplitude_decay)},
      {"flow.envelope", flow(&FlowSpec::envelope)},
      {"flow.wavelength", flow(&FlowSpec::wavelength)},
      {"flow.frequency", flow(&FlowSpec::frequency)},
      {"flow.frequency_exponent", flow(&FlowSpec::frequency_exponent)},
      {"flow.street_spacing", flow(&FlowSpec::street_spacing)},
      {"flow.street_offset", flow(&FlowSpec::street_offset)},
      {"flow.vortex_core", flow(&FlowSpec::vortex_core)},
      {"flow.vortex_strength", flow(&FlowSpec::vortex_strength)},
      {"flow.convection", flow(&FlowSpec::convection)},
      {"flow.seed", flow(&FlowSpec::seed)},

      {"render.width", render(&RenderConfig::width)},
      {"render.height", render(&RenderConfig::height)},
      {"render.particles_per_px", render(&RenderConfig::particles_per_px)},
      {"render.diameter_mean", render(&RenderConfig::diameter_mean)},
      {"render.diameter_std", render(&RenderConfig::diameter_std)},
      {"render.intensity_mean", render(&RenderConfig::intensity_mean)},
      {"render.intensity_std", render(&RenderConfig::intensity_std)},
      {"render.background", render(&RenderConfig::background)},
      {"render.noise_sigma", render(&RenderConfig::noise_sigma)},
      {"render.margin_px", render(&RenderConfig::margin_px)},

      {"piv.window", piv(&PivConfig::window)},
      {"piv.overlap", piv(&PivConfig::overlap)},
      {"piv.px_per_length", piv(&PivConfig::px_per_length)},
      {"piv.search", piv(&PivConfig::search)},
      {"piv.margin_x", piv(&PivConfig::margin_x)},
      {"piv.margin_y", piv(&PivConfig::margin_y)},
      {"piv.mask_rect",
       [](RunConfig& c, const TomlValue& v, const std::string& k) {
         c.mask_rect = as_doubles(v, k);
         if (!c.mask_rect.empty() && c.mask_rect.size() != 4)
           fail(ErrorCode::Config, k + ": expected [x0, y0, x1, y1]");
       }},

      {"validate.folds", num(&RunConfig::folds)},

      {"sweep.r", [](RunConfig& c, const TomlValue& v, const std::string& k) { c.sweep_r = as_ints(v, k); }},
      {"sweep.p", [](RunConfig& c, const TomlValue& v, const std::string& k) { c.sweep_p = as_ints(v, k); }},
      {"sweep.theta", [](RunConfig& c, const TomlValue& v, const std::string& k) { c.sweep_theta = as_doubles(v, k); }},
      {"sweep.theta_test", num(&RunConfig::theta_test)},
      {"sweep.estimators",
       [](RunConfig& c, const TomlValue& v, const std::string& k) { c.sweep_estimators = as_estimators(v, k); }},

      {"bench.steps", num(&RunConfig::bench_steps)},
      {"bench.repeats", num(&RunConfig::bench_repeats)},
      {"bench.p", [](RunConfig& c, const TomlValue& v, const std::string& k) { c.bench_p = as_ints(v, k); }},
      {"bench.estimators",
       [](RunConfig& c, const TomlValue& v, const std::string& k) { c.bench_estimators = as_estimators(v, k); }},
      {"bench.pairs", num(&RunConfig::bench_pairs)},

      {"rtsim.pairs", num(&RunConfig::rt_pairs)},
      {"rtsim.runs", num(&RunConfig::rt_runs)},
      {"rtsim.naive", [](RunConfig& c, const TomlValue& v, const std::string& k) { c.rt_naive = as_bool(v, k); }},
      {"rtsim.transient_steps", num(&RunConfig::rt_transient)},
      {"rtsim.eps_factor", num(&RunConfig::rt_eps_factor)},
      {"rtsim.fifo", [](RunConfig& c, const TomlValue& v, const std::string& k) { c.rt_fifo = as_bool(v, k); }},
  };
  return table;
}

}  // namespace

TomlTable parse_toml(const std::string& text) { return TomlParser(text).parse(); }

TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

TomlValue parse_toml_value(const std::string& text) {
  try {
    return TomlParser(text).single_value();
  } catch (const Error&) {
    return text;
  }
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "kalman") return Estimator::Kalman;
  if (s == "pinv") return Estimator::Pinv;
  if (s == "kalman-steady") return Estimator::KalmanSteady;
  fail(ErrorCode::Config, "unknown estimator '" + s + "' (kalman, pinv, kalman-steady)");
}

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::Kalman: return "kalman";
    case Estimator::Pinv: return "pinv";
    case Estimator::KalmanSteady: return "kalman-steady";
  }
  return "?";
}

void apply_setting(RunConfig& cfg, const std::string& key, const TomlValue& value) {
  auto it = setters().find(key);
  if (it == setters().end()) fail(ErrorCode::Config, "unknown config key '" + key + "'");
  it->second(cfg, value, key);
}

void apply_table(RunConfig& cfg, const TomlTable& table) {
  for (const auto& [k, v] : table) apply_setting(cfg, k, v);
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_table(cfg, parse_toml_file(path));
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  require(r >= 1, ErrorCode::Config, "model.r must be >= 1");
  require(p >= 1, ErrorCode::Config, "model.p must be >= 1");
  require(snapshots >= 2, ErrorCode::Config, "data.snapshots must be >= 2");
  require(sampling_rate > 0.0, ErrorCode::Config, "data.sampling_rate must be > 0");
  require(field_noise >= 0.0, ErrorCode::Config, "data.field_noise must be >= 0");
  require(dt_pair > 0.0, ErrorCode::Config, "data.dt_pair must be > 0");
  require(folds >= 2, ErrorCode::Config, "validate.folds must be >= 2");
  require(bench_steps >= 1 && bench_repeats >= 1 && bench_pairs >= 1, ErrorCode::Config, "bench counts must be >= 1");
  require(rt_pairs >= 1 && rt_runs >= 1 && rt_transient >= 0, ErrorCode::Config, "rtsim counts out of range");
  require(rt_eps_factor > 0.0, ErrorCode::Config, "rtsim.eps_factor must be > 0");
  for (int v : sweep_r) require(v >= 1, ErrorCode::Config, "sweep.r entries must be >= 1");
  for (int v : sweep_p) require(v >= 1, ErrorCode::Config, "sweep.p entries must be >= 1");
  for (int v : bench_p) require(v >= 1, ErrorCode::Config, "bench.p entries must be >= 1");
  flow.validate();
  piv.validate();
  require(render.width >= piv.window && render.height >= piv.window, ErrorCode::Config,
          "image smaller than one interrogation window");
}

RenderConfig RunConfig::render_config() const {
  RenderConfig rc = render;
  rc.px_per_length = piv.px_per_length;
  return rc;
}

}  // namespace sppiv
