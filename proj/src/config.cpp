#include "ayf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "ayf/errors.hpp"
#include "ayf/hash.hpp"

namespace ayf::config {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + what);
}

double to_double(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  double scale = 1.0;
  // A trailing "pi" multiplies by pi, so frequency banks stay readable.
  if (v.size() >= 2 && v.compare(v.size() - 2, 2, "pi") == 0) {
    scale = std::numbers::pi;
    v = trim(v.substr(0, v.size() - 2));
    if (v.empty()) v = "1";
  }
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, raw, "a number");
  return out * scale;
}

std::int64_t to_int(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, raw, "an integer");
  return out;
}

int to_int32(const std::string& key, const std::string& raw) {
  const std::int64_t v = to_int(key, raw);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    bad_value(key, raw, "a 32-bit integer");
  }
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, raw, "an unsigned integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, raw, "a boolean");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> items;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

std::vector<double> to_doubles(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  for (const auto& item : split_list(raw)) out.push_back(to_double(key, item));
  return out;
}

std::vector<int> to_ints(const std::string& key, const std::string& raw) {
  std::vector<int> out;
  for (const auto& item : split_list(raw)) out.push_back(to_int32(key, item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

struct Entry {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define AYF_DOUBLE(key, field)                                                                  \
  {                                                                                             \
    key, {                                                                                      \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
          [](const ExperimentConfig& c) { return format_double(c.field); }                       \
    }                                                                                           \
  }
#define AYF_INT(key, field)                                                                     \
  {                                                                                             \
    key, {                                                                                      \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_int32(k, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.field); }                      \
    }                                                                                           \
  }
#define AYF_I64(key, field)                                                                     \
  {                                                                                             \
    key, {                                                                                      \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_int(k, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.field); }                      \
    }                                                                                           \
  }
#define AYF_U64(key, field)                                                                     \
  {                                                                                             \
    key, {                                                                                      \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_u64(k, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.field); }                      \
    }                                                                                           \
  }
#define AYF_LIST(key, field, conv)                                                              \
  {                                                                                             \
    key, {                                                                                      \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = conv(k, v); }, \
          [](const ExperimentConfig& c) { return join(c.field); }                                \
    }                                                                                           \
  }

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> entries = {
      {"teacher.kind",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          const std::string s = trim(v);
          if (s == "gaussian") {
            c.teacher.kind = TeacherKind::gaussian;
          } else if (s == "ring") {
            c.teacher.kind = TeacherKind::ring;
          } else {
            bad_value(k, v, "gaussian|ring");
          }
        },
        [](const ExperimentConfig& c) {
          return std::string(c.teacher.kind == TeacherKind::gaussian ? "gaussian" : "ring");
        }}},
      AYF_DOUBLE("teacher.c", teacher.c),
      AYF_INT("teacher.dim", teacher.dim),
      AYF_INT("teacher.modes", teacher.modes),
      AYF_DOUBLE("teacher.radius", teacher.radius),
      AYF_DOUBLE("teacher.comp_std", teacher.comp_std),
      {"guidance.mode",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          try {
            c.guidance.mode = teachers::parse_guidance_mode(trim(v));
          } catch (const std::exception&) {
            bad_value(k, v, "none|autoguidance|cfg");
          }
        },
        [](const ExperimentConfig& c) { return teachers::to_string(c.guidance.mode); }}},
      AYF_DOUBLE("guidance.weak_multiplier", guidance.weak_multiplier),
      AYF_U64("guidance.weak_seed", guidance.weak_seed),
      AYF_LIST("model.hidden", model.hidden, to_ints),
      AYF_INT("model.embed_width", model.embed_width),
      AYF_LIST("model.freqs", model.freqs, to_doubles),
      AYF_U64("model.seed", model_seed),
      {"train.objective",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          try {
            c.train.objective = trainer::parse_objective(trim(v));
          } catch (const std::exception&) {
            bad_value(k, v, "emd|lmd|cm|shortcut|meanflow");
          }
        },
        [](const ExperimentConfig& c) { return trainer::to_string(c.train.objective); }}},
      AYF_DOUBLE("train.P_mean", train.P_mean),
      AYF_DOUBLE("train.P_std", train.P_std),
      AYF_DOUBLE("train.lambda_min", train.lambda_min),
      AYF_DOUBLE("train.lambda_max", train.lambda_max),
      AYF_DOUBLE("train.sigma_d", train.sigma_d),
      AYF_DOUBLE("train.lr", train.lr),
      AYF_INT("train.batch", train.batch),
      AYF_I64("train.iters", train.iters),
      AYF_U64("train.seed", train.seed),
      {"train.ema_decay",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (trim(v) == "none") {
            c.train.ema_decay.reset();
          } else {
            c.train.ema_decay = to_double(k, v);
          }
        },
        [](const ExperimentConfig& c) {
          return c.train.ema_decay ? format_double(*c.train.ema_decay) : std::string("none");
        }}},
      AYF_INT("train.log_every", train.log_every),
      AYF_INT("train.checkpoint_every", train.checkpoint_every),
      AYF_DOUBLE("emd.c_norm", train.emd.c_norm),
      AYF_DOUBLE("emd.H", train.emd.H),
      AYF_DOUBLE("emd.r_max", train.emd.r_max),
      {"emd.weighting",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          try {
            c.train.emd.weighting = objectives::parse_weighting(trim(v));
          } catch (const std::exception&) {
            bad_value(k, v, "inverse_square|uniform");
          }
        },
        [](const ExperimentConfig& c) { return objectives::to_string(c.train.emd.weighting); }}},
      {"emd.normalize",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.emd.normalize = to_bool(k, v); },
        [](const ExperimentConfig& c) { return std::string(c.train.emd.normalize ? "true" : "false"); }}},
      {"adv.enabled",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.adversarial = to_bool(k, v); },
        [](const ExperimentConfig& c) { return std::string(c.adversarial ? "true" : "false"); }}},
      AYF_DOUBLE("adv.alpha", adv.alpha),
      AYF_DOUBLE("adv.beta", adv.beta),
      AYF_DOUBLE("adv.lr_g", adv.lr_g),
      AYF_DOUBLE("adv.lr_d", adv.lr_d),
      AYF_LIST("adv.disc_hidden", adv.disc_hidden, to_ints),
      AYF_I64("adv.iters", adv.iters),
      AYF_U64("adv.seed", adv.seed),
      AYF_INT("sample.steps", sample.steps),
      AYF_DOUBLE("sample.gamma", sample.gamma),
      AYF_DOUBLE("sample.lambda", sample.lambda),
      AYF_INT("sample.n", sample.n),
      AYF_U64("sample.seed", sample.seed),
      AYF_INT("eval.samples", eval.samples),
      AYF_INT("eval.seeds", eval.seeds),
      AYF_LIST("eval.steps", eval.steps, to_ints),
      AYF_DOUBLE("eval.gamma", eval.gamma),
      AYF_LIST("eval.lambda_grid", eval.lambda_grid, to_doubles),
      AYF_DOUBLE("eval.cfg_lambda", eval.cfg_lambda),
      {"out",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out = trim(v); },
        [](const ExperimentConfig& c) { return c.out; }}},
  };
  return entries;
}

#undef AYF_DOUBLE
#undef AYF_INT
#undef AYF_I64
#undef AYF_U64
#undef AYF_LIST

void assign(ExperimentConfig& cfg, const std::string& line, int lineno) {
  const auto eq = line.find('=');
  const std::string where = lineno > 0 ? " (line " + std::to_string(lineno) + ")" : "";
  if (eq == std::string::npos) throw ConfigError("expected key = value" + where + ": '" + line + "'");
  const std::string key = trim(std::string_view(line).substr(0, eq));
  const std::string value = trim(std::string_view(line).substr(eq + 1));
  const auto& reg = registry();
  const auto it = reg.find(key);
  if (it == reg.end()) throw ConfigError("unknown key '" + key + "'" + where);
  it->second.set(cfg, key, value);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, ptr);
}

void ExperimentConfig::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (teacher.kind == TeacherKind::gaussian) {
    if (!positive(teacher.c)) throw ConfigError("teacher.c must be > 0");
    if (teacher.dim < 1) throw ConfigError("teacher.dim must be >= 1");
    if (guidance.mode != teachers::GuidanceMode::none) {
      throw ConfigError("guidance.mode requires teacher.kind = ring");
    }
  } else {
    if (teacher.modes < 1) throw ConfigError("teacher.modes must be >= 1");
    if (!positive(teacher.radius)) throw ConfigError("teacher.radius must be > 0");
    if (!positive(teacher.comp_std)) throw ConfigError("teacher.comp_std must be > 0");
  }
  if (!positive(guidance.weak_multiplier)) throw ConfigError("guidance.weak_multiplier must be > 0");
  if (model.hidden.empty() || std::any_of(model.hidden.begin(), model.hidden.end(), [](int w) { return w < 1; })) {
    throw ConfigError("model.hidden needs positive widths");
  }
  if (model.embed_width < 1) throw ConfigError("model.embed_width must be >= 1");
  if (model.freqs.empty() || std::any_of(model.freqs.begin(), model.freqs.end(), [](double f) { return !std::isfinite(f); })) {
    throw ConfigError("model.freqs needs finite frequencies");
  }
  train.validate();
  adv.validate();
  if (std::any_of(adv.disc_hidden.begin(), adv.disc_hidden.end(), [](int w) { return w < 1; })) {
    throw ConfigError("adv.disc_hidden needs positive widths");
  }
  if (sample.steps < 1) throw ConfigError("sample.steps must be >= 1");
  if (!(sample.gamma >= 0.0 && sample.gamma <= 1.0)) throw ConfigError("sample.gamma must lie in [0, 1]");
  if (sample.n < 1) throw ConfigError("sample.n must be >= 1");
  if (eval.samples < 1 || eval.samples > 1024) throw ConfigError("eval.samples must lie in [1, 1024]");
  if (eval.seeds < 1) throw ConfigError("eval.seeds must be >= 1");
  if (eval.steps.empty() || std::any_of(eval.steps.begin(), eval.steps.end(), [](int s) { return s < 1; })) {
    throw ConfigError("eval.steps needs positive step counts");
  }
  if (!(eval.gamma >= 0.0 && eval.gamma <= 1.0)) throw ConfigError("eval.gamma must lie in [0, 1]");
  if (eval.lambda_grid.empty()) throw ConfigError("eval.lambda_grid must be non-empty");
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  // The output location is not part of the experiment's identity.
  for (const auto& [key, entry] : registry()) {
    if (key != "out") out += key + " = " + entry.get(*this) + "\n";
  }
  return out;
}

std::string ExperimentConfig::hash() const { return to_hex(fnv1a(canonical())); }

ExperimentConfig parse(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    if (trim(line).empty()) continue;
    assign(cfg, line, lineno);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  assign(cfg, assignment, 0);
  cfg.validate();
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, entry] : registry()) keys.push_back(key);
  return keys;
}

}  // namespace ayf::config
