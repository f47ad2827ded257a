#include "fftat/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace fftat {
namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(strcat(key, ": expected unsigned integer, got '", s, "'"));
  }
  if (pos != s.size() || s[0] == '-')
    throw ConfigError(strcat(key, ": expected unsigned integer, got '", s, "'"));
  return v;
}

double parse_f64(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(strcat(key, ": expected number, got '", s, "'"));
  }
  if (pos != s.size())
    throw ConfigError(strcat(key, ": expected number, got '", s, "'"));
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  throw ConfigError(strcat(key, ": expected true/false, got '", s, "'"));
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct FieldDef {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool quoted = false;  // string-valued; canonical dump wraps in quotes
};

#define FFTAT_FIELD_U64(member)                                                    \
  FieldDef {                                                                       \
    #member,                                                                       \
        [](RunConfig& c, const std::string& s) { c.member = parse_u64(#member, s); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                \
  }
#define FFTAT_FIELD_F64(member)                                                    \
  FieldDef {                                                                       \
    #member,                                                                       \
        [](RunConfig& c, const std::string& s) { c.member = parse_f64(#member, s); }, \
        [](const RunConfig& c) { return fmt_f64(c.member); }                       \
  }
#define FFTAT_FIELD_BOOL(member)                                                    \
  FieldDef {                                                                        \
    #member,                                                                        \
        [](RunConfig& c, const std::string& s) { c.member = parse_bool(#member, s); }, \
        [](const RunConfig& c) { return c.member ? "true" : "false"; }              \
  }
#define FFTAT_FIELD_STR(member)                                        \
  FieldDef {                                                           \
    #member, [](RunConfig& c, const std::string& s) { c.member = s; }, \
        [](const RunConfig& c) { return c.member; }, true              \
  }

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = [] {
    std::vector<FieldDef> v = {
        FFTAT_FIELD_STR(precision),
        FFTAT_FIELD_U64(image_side),
        FFTAT_FIELD_U64(patch_side),
        FFTAT_FIELD_U64(dim),
        FFTAT_FIELD_U64(heads),
        FFTAT_FIELD_U64(layers),
        FFTAT_FIELD_U64(classes),
        FFTAT_FIELD_U64(mlp_ratio),
        FFTAT_FIELD_U64(steps),
        FFTAT_FIELD_U64(warmup_steps),
        FFTAT_FIELD_F64(peak_lr),
        FFTAT_FIELD_F64(momentum),
        FFTAT_FIELD_F64(weight_decay),
        FFTAT_FIELD_U64(batch_size),
        FFTAT_FIELD_U64(seed),
        FFTAT_FIELD_F64(alpha),
        FFTAT_FIELD_F64(beta),
        FFTAT_FIELD_F64(gamma),
        FFTAT_FIELD_F64(grl_lambda),
        FFTAT_FIELD_F64(prob_eps),
        FFTAT_FIELD_F64(graph_ema),
        FFTAT_FIELD_BOOL(feature_fusion),
        FFTAT_FIELD_BOOL(tg_guidance),
        FFTAT_FIELD_STR(data_dir),
        FFTAT_FIELD_STR(out_dir),
        FFTAT_FIELD_STR(run_name),
        FFTAT_FIELD_U64(eval_every),
        FFTAT_FIELD_U64(checkpoint_every),
    };
    std::sort(v.begin(), v.end(),
              [](const FieldDef& a, const FieldDef& b) { return std::strcmp(a.name, b.name) < 0; });
    return v;
  }();
  return defs;
}

const FieldDef* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.name) return &f;
  return nullptr;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void load_toml_like(RunConfig& cfg, std::istream& in, const std::string& path) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(strcat(path, ":", lineno, ": expected key = value"));
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (!val.empty() && val[0] == '"') {
      std::size_t close = val.find('"', 1);
      if (close == std::string::npos)
        throw ConfigError(strcat(path, ":", lineno, ": unterminated string"));
      val = val.substr(1, close - 1);
    } else {
      std::size_t hash = val.find('#');
      if (hash != std::string::npos) val = trim(val.substr(0, hash));
    }
    apply_kv(cfg, key, val);
  }
}

void load_json(RunConfig& cfg, std::istream& in, const std::string& path) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(strcat(path, ": JSON parse error: ", e.what()));
  }
  if (!j.is_object()) throw ConfigError(strcat(path, ": config must be a flat JSON object"));
  for (const auto& [key, value] : j.items()) {
    std::string s;
    if (value.is_string())
      s = value.get<std::string>();
    else if (value.is_boolean())
      s = value.get<bool>() ? "true" : "false";
    else if (value.is_number_unsigned())
      s = std::to_string(value.get<std::uint64_t>());
    else if (value.is_number())
      s = fmt_f64(value.get<double>());
    else
      throw ConfigError(strcat(path, ": key '", key, "' has unsupported value type"));
    apply_kv(cfg, key, s);
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> v;
    for (const auto& f : fields()) v.push_back(f.name);
    return v;
  }();
  return keys;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  const FieldDef* f = find_field(key);
  if (!f) {
    std::string keys;
    for (const auto& k : config_keys()) keys += strcat("\n  ", k);
    throw ConfigError(strcat("unknown config key '", key, "'; valid keys:", keys));
  }
  f->set(cfg, value);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError(strcat("cannot open config file '", path, "'"));
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    load_json(cfg, in, path);
  else
    load_toml_like(cfg, in, path);
}

void validate(const RunConfig& cfg) {
  auto fail = [](auto&&... parts) { throw ConfigError(strcat(parts...)); };
  if (cfg.precision != "f32" && cfg.precision != "f64")
    fail("precision must be f32 or f64, got '", cfg.precision, "'");
  if (cfg.patch_side == 0 || cfg.image_side % cfg.patch_side != 0)
    fail("image_side (", cfg.image_side, ") must be divisible by patch_side (", cfg.patch_side,
         ")");
  if (cfg.heads == 0 || cfg.dim % cfg.heads != 0)
    fail("dim (", cfg.dim, ") must be divisible by heads (", cfg.heads, ")");
  if (cfg.dim == 0 || cfg.layers == 0) fail("dim and layers must be positive");
  if (cfg.classes < 2) fail("classes must be >= 2, got ", cfg.classes);
  if (cfg.mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (cfg.steps == 0) fail("steps must be positive");
  if (cfg.warmup_steps >= cfg.steps)
    fail("warmup_steps (", cfg.warmup_steps, ") must be < steps (", cfg.steps, ")");
  if (!(cfg.peak_lr > 0)) fail("peak_lr must be > 0");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) fail("momentum must be in [0, 1)");
  if (!(cfg.weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (cfg.batch_size == 0) fail("batch_size must be positive");
  if (!(cfg.alpha >= 0 && cfg.beta >= 0 && cfg.gamma >= 0))
    fail("alpha, beta, gamma must be >= 0");
  if (!(cfg.grl_lambda >= 0)) fail("grl_lambda must be >= 0");
  if (!(cfg.prob_eps > 0 && cfg.prob_eps < 0.5)) fail("prob_eps must be in (0, 0.5)");
  if (!(cfg.graph_ema >= 0 && cfg.graph_ema < 1)) fail("graph_ema must be in [0, 1)");
  if (cfg.eval_every == 0) fail("eval_every must be positive");
  if (cfg.checkpoint_every == 0) fail("checkpoint_every must be positive");
}

std::string canonical_dump(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& f : fields()) {
    std::string v = f.get(cfg);
    // strings are quoted so empty values round-trip
    out << f.name << " = " << (f.quoted ? strcat("\"", v, "\"") : v) << "\n";
  }
  return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(canonical_dump(cfg)); }

std::string run_label(const RunConfig& cfg) {
  if (!cfg.run_name.empty()) return cfg.run_name;
  std::string flavor;
  if (cfg.alpha == 0 && cfg.beta == 0 && cfg.gamma == 0)
    flavor = "source_only";
  else if (!cfg.feature_fusion && !cfg.tg_guidance)
    flavor = "no_ff_no_tgsa";
  else if (!cfg.feature_fusion)
    flavor = "no_ff";
  else if (!cfg.tg_guidance)
    flavor = "no_tgsa";
  else
    flavor = "full";
  return strcat(flavor, "_s", cfg.seed);
}

}  // namespace fftat
