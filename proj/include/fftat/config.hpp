#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fftat/common.hpp"

namespace fftat {

struct ConfigError : Error {
  using Error::Error;
};

// Flat run configuration: one struct drives model shape, optimization,
// ablation flags, data locations, and output. Everything is serializable so
// a run directory can restate exactly what produced it.
struct RunConfig {
  std::string precision = "f32";  // f32 | f64

  // model shape
  std::uint64_t image_side = 32;
  std::uint64_t patch_side = 8;
  std::uint64_t dim = 64;
  std::uint64_t heads = 4;
  std::uint64_t layers = 4;
  std::uint64_t classes = 4;
  std::uint64_t mlp_ratio = 4;

  // optimization
  std::uint64_t steps = 2000;
  std::uint64_t warmup_steps = 200;
  double peak_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t batch_size = 16;  // per domain
  std::uint64_t seed = 0;

  // objective weights and adversarial plumbing; defaults tuned on the
  // synthetic benchmark (large alpha collapses features at these dims)
  double alpha = 0.1;  // domain-discriminator term
  double beta = 1.0;   // patch-discriminator term
  double gamma = 0.1;  // self-clustering term (subtracted)
  double grl_lambda = 1.0;
  double prob_eps = 1e-7;  // probability clamp before logs

  // graph handling
  double graph_ema = 0.0;  // 0 = overwrite each step

  // ablation flags
  bool feature_fusion = true;
  bool tg_guidance = true;

  // io
  std::string data_dir;
  std::string out_dir = "runs";
  std::string run_name;  // empty = derived from flags and seed
  std::uint64_t eval_every = 200;
  std::uint64_t checkpoint_every = 1000;

  std::uint64_t patches_per_side() const { return image_side / patch_side; }
  std::uint64_t patch_count() const { return patches_per_side() * patches_per_side(); }
  std::uint64_t patch_dim() const { return 3 * patch_side * patch_side; }
  std::uint64_t head_dim() const { return dim / heads; }
  std::uint64_t mlp_hidden() const { return mlp_ratio * dim; }
};

// every settable key, sorted; error messages and the canonical dump use it
const std::vector<std::string>& config_keys();

// set one key from its string form; unknown key or bad value -> ConfigError
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// TOML-style `key = value` lines (# comments) or a flat JSON object,
// chosen by .json extension
void load_config_file(RunConfig& cfg, const std::string& path);

// cross-field checks; throws ConfigError with the offending constraint
void validate(const RunConfig& cfg);

// sorted `key = value` dump; reparsing it reproduces the config
std::string canonical_dump(const RunConfig& cfg);

std::uint64_t config_hash(const RunConfig& cfg);

// resolved run name: explicit name, else flags+seed (e.g. "full_s0")
std::string run_label(const RunConfig& cfg);

}  // namespace fftat
