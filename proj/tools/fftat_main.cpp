#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fftat/checkpoint.hpp"
#include "fftat/config.hpp"
#include "fftat/data.hpp"
#include "fftat/gradcheck_suite.hpp"
#include "fftat/kernels.hpp"
#include "fftat/metrics.hpp"
#include "fftat/trainer.hpp"

namespace {

using namespace fftat;

// config precedence: file < FFTAT_PRECISION env < --set
RunConfig build_config(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!config_path.empty()) load_config_file(cfg, config_path);
  if (const char* env = std::getenv("FFTAT_PRECISION"); env && *env)
    apply_kv(cfg, "precision", env);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(strcat("--set wants key=value, got '", kv, "'"));
    apply_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate(cfg);
  return cfg;
}

// eval/export default to the config the training run wrote next to the checkpoint
std::string sibling_config(const std::string& ckpt_path) {
  namespace fs = std::filesystem;
  const fs::path p = fs::path(ckpt_path).parent_path() / "config.toml";
  return fs::exists(p) ? p.string() : std::string{};
}

template <typename F>
int with_precision(const RunConfig& cfg, F&& f) {
  if (cfg.precision == "f64") return f(double{});
  return f(float{});
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw ConfigError(strcat("no seeds in '", s, "'"));
  return out;
}

struct TrainData {
  LabeledSet src_train;
  UnlabeledSet tgt_train;
  EvalSet src_test;
  EvalSet tgt_test;
};

TrainData load_train_data(const RunConfig& cfg) {
  if (cfg.data_dir.empty())
    throw ConfigError("config needs data_dir; run `fftat dataset gen` and point data_dir at it");
  namespace fs = std::filesystem;
  const fs::path root = cfg.data_dir;
  TrainData d;
  d.src_train = load_folder((root / "source").string(), cfg.image_side);
  d.tgt_train = drop_labels(load_folder((root / "target").string(), cfg.image_side));
  d.src_test = EvalSet{load_folder((root / "source_test").string(), cfg.image_side)};
  d.tgt_test = EvalSet{load_folder((root / "target_test").string(), cfg.image_side)};
  check(d.src_train.classes == cfg.classes, "dataset at '", cfg.data_dir, "' has ",
        d.src_train.classes, " classes but config says ", cfg.classes);
  return d;
}

int cmd_dataset_gen(const std::string& out, std::uint64_t seed, std::size_t classes,
                    std::size_t train_pc, std::size_t test_pc) {
  namespace fs = std::filesystem;
  const std::uint64_t test_seed = derive_seed(seed, 9, 0);
  struct Part {
    const char* name;
    std::uint64_t seed;
    std::size_t per_class;
    Domain domain;
  };
  const Part parts[] = {
      {"source", seed, train_pc, Domain::source},
      {"target", seed, train_pc, Domain::target},
      {"source_test", test_seed, test_pc, Domain::source},
      {"target_test", test_seed, test_pc, Domain::target},
  };
  for (const Part& part : parts) {
    const LabeledSet set = gen_synthetic(part.seed, part.per_class, classes, part.domain);
    const std::string dir = (fs::path(out) / part.name).string();
    write_folder(dir, set);
    std::cout << "wrote " << set.size() << " images to " << dir << "\n";
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& resume) {
  const TrainData d = load_train_data(cfg);
  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    std::cout << "training " << run_label(cfg) << " for " << cfg.steps << " steps ("
              << cfg.precision << ")\n";
    const RunResult r =
        train_run<T>(cfg, d.src_train, d.tgt_train, d.src_test, d.tgt_test, resume, &std::cout);
    std::cout << "run dir " << r.dir << "\n";
    std::printf("final source_test accuracy %.6f\n", r.source_test_acc);
    std::printf("final target_test accuracy %.6f\n", r.target_test_acc);
    return 0;
  });
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt, const std::string& split) {
  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    const Checkpoint<T> ck = load_checkpoint<T>(ckpt, cfg);
    namespace fs = std::filesystem;
    const EvalSet set{load_folder((fs::path(cfg.data_dir) / split).string(), cfg.image_side)};
    const double acc = evaluate(ck.params, ck.graph, set, cfg);
    std::printf("checkpoint step %llu split %s accuracy %.6f\n",
                (unsigned long long)ck.step, split.c_str(), acc);
    return 0;
  });
}

int cmd_ablate(const RunConfig& base, const std::string& seeds_csv, std::size_t jobs) {
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_csv);
  const TrainData d = load_train_data(base);
  if (jobs > 1) kernels::set_threads(1);  // workers are the parallelism then
  return with_precision(base, [&](auto tag) {
    using T = decltype(tag);
    const std::vector<AblationRow> rows =
        run_ablation<T>(base, seeds, jobs, d.src_train, d.tgt_train, d.src_test, d.tgt_test,
                        &std::cout);
    std::printf("%-14s %-6s %s\n", "config", "seed", "target_accuracy");
    for (const auto& r : rows)
      std::printf("%-14s %-6s %.6f\n", r.flavor.c_str(), r.seed.c_str(), r.target_acc);
    std::cout << "table written to "
              << (std::filesystem::path(base.out_dir) / "ablation.csv").string() << "\n";
    return 0;
  });
}

int cmd_gradcheck(std::uint64_t seed, bool inject_softmax_fault) {
  if (inject_softmax_fault) kernels::softmax_backward_fault_scale = 1.01;
  const std::vector<GradCheckRow> rows = run_gradcheck_suite(seed);
  std::printf("%-26s %14s %12s  %s\n", "op", "max rel err", "tolerance", "status");
  std::vector<std::string> failed;
  for (const auto& r : rows) {
    std::printf("%-26s %14.3e %12.1e  %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                r.pass ? "ok" : "FAIL");
    if (!r.pass) failed.push_back(r.name);
  }
  if (failed.empty()) {
    std::cout << "gradcheck passed (" << rows.size() << " components, f64)\n";
    return 0;
  }
  std::cout << "gradcheck FAILED:";
  for (const auto& name : failed) std::cout << " " << name;
  std::cout << "\n";
  return 2;
}

int cmd_export_graph(const RunConfig& cfg, const std::string& ckpt, const std::string& csv_in,
                     const std::string& csv_out) {
  std::vector<double> m;
  std::size_t p = 0;
  std::uint64_t built = 0;
  if (!csv_in.empty()) {
    m = read_graph_csv(csv_in, p);
  } else {
    check(!ckpt.empty(), "export-graph wants --checkpoint or --csv");
    with_precision(cfg, [&](auto tag) {
      using T = decltype(tag);
      const Checkpoint<T> ck = load_checkpoint<T>(ckpt, cfg);
      p = ck.graph.p;
      built = ck.graph.iteration_built;
      m.assign(ck.graph.m.begin(), ck.graph.m.end());
      return 0;
    });
  }
  std::cout << "transferability graph " << p << "x" << p;
  if (csv_in.empty()) std::cout << " (built at step " << built << ")";
  std::cout << "\n" << ascii_heatmap(m, p);
  if (!csv_out.empty()) {
    write_graph_csv(csv_out, m, p);
    std::cout << "csv written to " << csv_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-fusion transferability-aware transformer for unsupervised domain "
               "adaptation: training, evaluation, and verification tools"};
  app.require_subcommand(1);

  // dataset gen
  auto* dataset = app.add_subcommand("dataset", "synthetic two-domain dataset tools");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "generate source/target train+test folders");
  std::string gen_out = "data";
  std::uint64_t gen_seed = 0;
  std::size_t gen_classes = 4, gen_train_pc = 64, gen_test_pc = 32;
  gen->add_option("--out", gen_out, "output root directory")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--classes", gen_classes, "number of glyph classes (max 8)")
      ->capture_default_str();
  gen->add_option("--train-per-class", gen_train_pc, "train images per class per domain")
      ->capture_default_str();
  gen->add_option("--test-per-class", gen_test_pc, "held-out images per class per domain")
      ->capture_default_str();

  // shared config options
  std::string config_path;
  std::vector<std::string> sets;
  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "TOML or flat JSON config file");
    cmd->add_option("--set", sets, "override config key, e.g. --set peak_lr=0.02")
        ->take_all();
  };

  auto* train = app.add_subcommand("train", "train one run, writing metrics and checkpoints");
  add_config_opts(train);
  std::string resume;
  train->add_option("--resume", resume, "checkpoint file to continue from");

  auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset split");
  add_config_opts(eval);
  std::string eval_ckpt, eval_split = "target_test";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "dataset subfolder to evaluate")
      ->capture_default_str();

  auto* ablate = app.add_subcommand(
      "ablate", "train the full/no-fusion/no-guidance/source-only grid and tabulate");
  add_config_opts(ablate);
  std::string seeds_csv = "0,1,2";
  std::size_t jobs = 1;
  ablate->add_option("--seeds", seeds_csv, "comma-separated seeds")->capture_default_str();
  ablate->add_option("--jobs", jobs, "parallel training runs")->capture_default_str();

  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference verification of every op (f64)");
  std::uint64_t gc_seed = 0;
  bool gc_fault = false;
  gradcheck->add_option("--seed", gc_seed, "suite seed")->capture_default_str();
  gradcheck->add_flag("--inject-softmax-fault", gc_fault)->group("");  // test fixture, hidden

  auto* xgraph =
      app.add_subcommand("export-graph", "render a transferability graph as CSV + text heatmap");
  add_config_opts(xgraph);
  std::string xg_ckpt, xg_csv_in, xg_csv_out;
  xgraph->add_option("--checkpoint", xg_ckpt, "checkpoint holding the graph");
  xgraph->add_option("--csv", xg_csv_in, "previously exported graph CSV");
  xgraph->add_option("--out", xg_csv_out, "write the graph as CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors are exit 1; help/version are 0
  }

  try {
    if (gen->parsed()) return cmd_dataset_gen(gen_out, gen_seed, gen_classes, gen_train_pc,
                                              gen_test_pc);
    if (train->parsed()) return cmd_train(build_config(config_path, sets), resume);
    if (eval->parsed()) {
      if (config_path.empty()) config_path = sibling_config(eval_ckpt);
      if (config_path.empty())
        throw ConfigError("eval needs --config (no config.toml found next to the checkpoint)");
      return cmd_eval(build_config(config_path, sets), eval_ckpt, eval_split);
    }
    if (ablate->parsed()) return cmd_ablate(build_config(config_path, sets), seeds_csv, jobs);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_fault);
    if (xgraph->parsed()) {
      if (config_path.empty() && !xg_ckpt.empty()) config_path = sibling_config(xg_ckpt);
      RunConfig cfg;  // only precision/dims matter, and only for the checkpoint path
      if (!config_path.empty() || !xg_ckpt.empty()) cfg = build_config(config_path, sets);
      return cmd_export_graph(cfg, xg_ckpt, xg_csv_in, xg_csv_out);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
