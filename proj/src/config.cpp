#include "ncre/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "ncre/errors.hpp"

namespace ncre {

std::string_view to_string(TrainMode m) { return m == TrainMode::kStaged ? "staged" : "joint"; }

TrainMode parse_mode(std::string_view s) {
  if (s == "staged") return TrainMode::kStaged;
  if (s == "joint") return TrainMode::kJoint;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected staged|joint)");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": expected true|false, got '" + s + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define NCRE_SIZE(KEY, MEMBER)                                                          \
  Field {                                                                               \
    KEY, [](const RunConfig& c) { return std::to_string(c.MEMBER); },                   \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_u64(KEY, v); }          \
  }
#define NCRE_DOUBLE(KEY, MEMBER)                                                        \
  Field {                                                                               \
    KEY, [](const RunConfig& c) { return fmt_double(c.MEMBER); },                       \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); }       \
  }
#define NCRE_BOOL(KEY, MEMBER)                                                          \
  Field {                                                                               \
    KEY, [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); },   \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); }         \
  }
#define NCRE_STRING(KEY, MEMBER)                                                        \
  Field {                                                                               \
    KEY, [](const RunConfig& c) { return c.MEMBER; },                                   \
        [](RunConfig& c, const std::string& v) { c.MEMBER = v; }                        \
  }
#define NCRE_ENUM(KEY, MEMBER, PARSE)                                                   \
  Field {                                                                               \
    KEY, [](const RunConfig& c) { return std::string(to_string(c.MEMBER)); },           \
        [](RunConfig& c, const std::string& v) { c.MEMBER = PARSE(v); }                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      NCRE_SIZE("seed", pipeline.seed),
      NCRE_ENUM("mode", pipeline.mode, parse_mode),
      NCRE_SIZE("batch_size", pipeline.batch_size),
      NCRE_SIZE("stage1_epochs", pipeline.stage1_epochs),
      NCRE_SIZE("stage2_epochs", byol.epochs),
      NCRE_SIZE("stage3_epochs", pipeline.stage3_epochs),
      NCRE_DOUBLE("stage1_lr", pipeline.stage1_lr),
      NCRE_DOUBLE("stage2_lr", byol.learning_rate),
      NCRE_DOUBLE("stage3_lr", pipeline.stage3_lr),
      NCRE_SIZE("joint_epochs", pipeline.joint_epochs),
      NCRE_DOUBLE("joint_lr", pipeline.joint_lr),
      NCRE_DOUBLE("momentum", pipeline.momentum),
      NCRE_DOUBLE("lambda", pipeline.lambda),
      NCRE_DOUBLE("delta", byol.delta),
      NCRE_SIZE("vocab_size", tokenizer.vocab_size),
      NCRE_BOOL("lowercase", tokenizer.lowercase),
      NCRE_SIZE("embed_dim", encoder.embed_dim),
      NCRE_SIZE("num_layers", encoder.num_layers),
      NCRE_SIZE("hidden_dim", encoder.hidden_dim),
      NCRE_ENUM("pooling", encoder.pooling, parse_pooling),
      NCRE_ENUM("activation", encoder.activation, parse_activation),
      NCRE_SIZE("projector_hidden", byol.projector_hidden),
      NCRE_SIZE("projector_out", byol.projector_out),
      NCRE_SIZE("predictor_hidden", byol.predictor_hidden),
      NCRE_ENUM("byol_activation", byol.activation, parse_activation),
      NCRE_ENUM("tap", byol.tap, parse_tap),
      NCRE_BOOL("stop_gradient", byol.stop_gradient),
      NCRE_BOOL("use_predictor", byol.use_predictor),
      NCRE_STRING("data", data_path),
      NCRE_STRING("labels", labels_path),
      NCRE_STRING("out", out_dir),
      NCRE_BOOL("synth", synth),
      NCRE_SIZE("classes", synth_cfg.num_classes),
      NCRE_SIZE("per_class", synth_cfg.per_class),
      NCRE_SIZE("vocab_per_class", synth_cfg.vocab_per_class),
      NCRE_DOUBLE("overlap", synth_cfg.overlap),
  };
  return table;
}

#undef NCRE_SIZE
#undef NCRE_DOUBLE
#undef NCRE_BOOL
#undef NCRE_STRING
#undef NCRE_ENUM

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  if (tokenizer.vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (encoder.embed_dim == 0 || encoder.hidden_dim == 0) throw ConfigError("encoder dims must be positive");
  if (byol.projector_hidden == 0 || byol.projector_out == 0 || byol.predictor_hidden == 0) {
    throw ConfigError("projector/predictor dims must be positive");
  }
  if (!(byol.delta >= 0.0 && byol.delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  if (pipeline.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (pipeline.stage1_epochs < 1 || byol.epochs < 1 || pipeline.stage3_epochs < 1 ||
      pipeline.joint_epochs < 1) {
    throw ConfigError("epoch counts must be at least 1");
  }
  for (double lr : {pipeline.stage1_lr, byol.learning_rate, pipeline.stage3_lr, pipeline.joint_lr}) {
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
  }
  if (!(pipeline.momentum >= 0.0 && pipeline.momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (!(pipeline.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (pipeline.mode == TrainMode::kStaged && encoder.num_layers == 0) {
    throw ConfigError("staged training needs num_layers >= 1 (the last layer is fine-tuned)");
  }
}

std::string to_kv(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> config_values(const RunConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const Field& f : fields()) out[f.key] = f.get(cfg);
  return out;
}

RunConfig from_kv(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
    try {
      set_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_kv(ss.str(), std::move(base));
}

}  // namespace ncre
