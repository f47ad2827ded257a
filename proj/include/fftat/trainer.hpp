#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "fftat/checkpoint.hpp"
#include "fftat/config.hpp"
#include "fftat/data.hpp"
#include "fftat/losses.hpp"
#include "fftat/metrics.hpp"
#include "fftat/model.hpp"

namespace fftat {

// SGD-momentum training loop: linear warmup to peak_lr, cosine decay to 0,
// per-step graph refresh (the graph consumed at step t was built at t-1).

inline double lr_at(std::uint64_t step, const RunConfig& cfg) {
  check(step <= cfg.steps, "lr_at: step ", step, " past end of schedule ", cfg.steps);
  if (step < cfg.warmup_steps) return cfg.peak_lr * double(step) / double(cfg.warmup_steps);
  const double t = double(step - cfg.warmup_steps) / double(cfg.steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

template <typename T>
struct TrainState {
  std::uint64_t step = 0;
  ModelParamsT<Tensor<T>> params;
  ModelParamsT<Tensor<T>> momentum;
  TransferGraph<T> graph;  // all-ones exactly at step 0
};

template <typename T>
TrainState<T> init_state(const RunConfig& cfg) {
  TrainState<T> st;
  Rng rng(derive_seed(cfg.seed, 1, 0));
  st.params = init_params<T>(cfg, rng);
  st.momentum = zero_params<T>(cfg);
  st.graph = TransferGraph<T>::ones(cfg.patch_count());
  return st;
}

struct StepMetrics {
  double l_clc = 0, l_dis = 0, l_pat = 0, mi = 0, total = 0, lr = 0;
};

// forward, backward, v <- m v + g, p <- p - lr v, then swap in the fresh graph
template <typename T>
StepMetrics train_step(TrainState<T>& state, const DomainBatch& batch, const RunConfig& cfg) {
  Tape<T> tape;
  ModelParamsT<Var<T>> pv = params_to_tape(tape, state.params, true);
  TrainForward<T> fwd = forward_train(tape, pv, batch, state.graph, cfg, state.step);

  const T eps = T(cfg.prob_eps);
  const std::size_t n_s = batch.source_images.size();
  const std::size_t n_t = batch.target_images.size();
  LossTerms<T> terms;
  terms.l_clc = classification_loss(tape, fwd.src_logits, batch.source_labels, eps);
  terms.l_dis = binary_ce(tape, fwd.dom_probs, domain_targets<T>(n_s, n_t, 1), eps);
  terms.l_pat =
      binary_ce(tape, fwd.patch_probs, domain_targets<T>(n_s, n_t, cfg.patch_count()), eps);
  terms.mi = self_clustering_mi(tape, fwd.tgt_logits, eps);
  terms.total = total_loss(tape, terms, T(cfg.alpha), T(cfg.beta), T(cfg.gamma));
  if (!std::isfinite(double(tape.val(terms.total).data[0])))
    throw NumericalError(strcat("total loss is non-finite at step ", state.step, " (l_clc=",
                                double(tape.val(terms.l_clc).data[0]), ", l_dis=",
                                double(tape.val(terms.l_dis).data[0]), ", l_pat=",
                                double(tape.val(terms.l_pat).data[0]), ", mi=",
                                double(tape.val(terms.mi).data[0]), ")"));

  tape.backward(terms.total);

  const double lr = lr_at(state.step, cfg);
  const T lrt = T(lr), mom = T(cfg.momentum), wd = T(cfg.weight_decay);

  // walk params, momentum, and tape vars in the shared visit order
  std::vector<Tensor<T>*> ps, ms;
  std::vector<Var<T>> vars;
  visit(state.params, [&](const std::string&, Tensor<T>& t) { ps.push_back(&t); });
  visit(state.momentum, [&](const std::string&, Tensor<T>& t) { ms.push_back(&t); });
  visit(pv, [&](const std::string&, Var<T>& v) { vars.push_back(v); });
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::vector<T> g = tape.grad(vars[i]);
    auto& p = ps[i]->data;
    auto& v = ms[i]->data;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const T gj = wd == T(0) ? g[j] : g[j] + wd * p[j];
      v[j] = mom * v[j] + gj;
      p[j] -= lrt * v[j];
    }
  }

  // refresh the graph even when lr is 0; cadence and optimization are decoupled
  TransferGraph<T> fresh = fwd.fresh_graph;
  if (cfg.graph_ema > 0) {
    const T a = T(cfg.graph_ema);
    for (std::size_t i = 0; i < fresh.m.size(); ++i)
      fresh.m[i] = a * state.graph.m[i] + (T(1) - a) * fresh.m[i];
  }
  state.graph = std::move(fresh);
  state.step += 1;

  StepMetrics sm;
  sm.l_clc = double(tape.val(terms.l_clc).data[0]);
  sm.l_dis = double(tape.val(terms.l_dis).data[0]);
  sm.l_pat = double(tape.val(terms.l_pat).data[0]);
  sm.mi = double(tape.val(terms.mi).data[0]);
  sm.total = double(tape.val(terms.total).data[0]);
  sm.lr = lr;
  return sm;
}

template <typename T>
double evaluate(const ModelParamsT<Tensor<T>>& params, const TransferGraph<T>& graph,
                const EvalSet& eval_set, const RunConfig& cfg) {
  const LabeledSet& s = eval_set.data;
  check(s.size() > 0, "evaluate: empty eval set");
  std::size_t correct = 0;
  const std::size_t chunk = 64;
  for (std::size_t at = 0; at < s.size(); at += chunk) {
    const std::size_t end = std::min(s.size(), at + chunk);
    std::vector<Image> images(s.images.begin() + std::ptrdiff_t(at),
                              s.images.begin() + std::ptrdiff_t(end));
    const std::vector<std::size_t> pred = predict(params, images, graph, cfg);
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == s.labels[at + i]) ++correct;
  }
  return double(correct) / double(s.size());
}

struct RunResult {
  std::string dir;
  double source_test_acc = 0;
  double target_test_acc = 0;
};

// Full training run with artifacts: config dump, per-step metrics.jsonl,
// summary.csv accuracy rows, checkpoints and graph CSVs on the checkpoint
// cadence. resume_path continues an interrupted run (append mode).
// halt_after > 0 stops the invocation once that many steps have completed,
// like a process killed mid-run; resume tests rely on it.
template <typename T>
RunResult train_run(const RunConfig& cfg, const LabeledSet& src_train,
                    const UnlabeledSet& tgt_train, const EvalSet& src_test,
                    const EvalSet& tgt_test, const std::string& resume_path = {},
                    std::ostream* progress = nullptr, std::uint64_t halt_after = 0) {
  validate(cfg);
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(cfg.out_dir) / run_label(cfg);
  fs::create_directories(dir);
  {
    std::ofstream cf(dir / "config.toml");
    check(cf.good(), "cannot write ", (dir / "config.toml").string());
    cf << canonical_dump(cfg);
  }

  TrainState<T> state;
  bool resuming = false;
  if (!resume_path.empty()) {
    Checkpoint<T> ck = load_checkpoint<T>(resume_path, cfg);
    if (ck.config_hash != config_hash(cfg) && progress)
      *progress << "note: resuming from a checkpoint with a different config hash\n";
    check(ck.seed == cfg.seed, "resume: checkpoint seed ", ck.seed, " != config seed ",
          cfg.seed, "; the batch stream would diverge");
    check(ck.step < cfg.steps, "resume: checkpoint is already at step ", ck.step);
    state.step = ck.step;
    state.params = std::move(ck.params);
    state.momentum = std::move(ck.momentum);
    state.graph = std::move(ck.graph);
    resuming = true;
  } else {
    state = init_state<T>(cfg);
  }

  BatchStream stream(src_train, tgt_train, cfg.batch_size, cfg.seed);
  MetricsLog metrics((dir / "metrics.jsonl").string(), resuming);
  SummaryCsv summary((dir / "summary.csv").string(), resuming);

  RunResult result;
  result.dir = dir.string();

  auto eval_both = [&](std::uint64_t at_step) {
    result.source_test_acc = evaluate(state.params, state.graph, src_test, cfg);
    result.target_test_acc = evaluate(state.params, state.graph, tgt_test, cfg);
    summary.row(at_step, "source_test", result.source_test_acc);
    summary.row(at_step, "target_test", result.target_test_acc);
    if (progress)
      *progress << "step " << at_step << " source_test " << result.source_test_acc
                << " target_test " << result.target_test_acc << "\n";
  };

  while (state.step < cfg.steps) {
    if (halt_after > 0 && state.step >= halt_after) break;
    const std::uint64_t step = state.step;
    const DomainBatch batch = stream.batch_at(step);
    const StepMetrics sm = train_step(state, batch, cfg);
    metrics.step_record(step, sm.l_clc, sm.l_dis, sm.l_pat, sm.mi, sm.total, sm.lr);

    const std::uint64_t done = step + 1;
    if (done % cfg.eval_every == 0 || done == cfg.steps) eval_both(done);
    if (done % cfg.checkpoint_every == 0 || done == cfg.steps) {
      Checkpoint<T> ck;
      ck.step = state.step;
      ck.seed = cfg.seed;
      ck.config_hash = config_hash(cfg);
      ck.params = state.params;
      ck.momentum = state.momentum;
      ck.graph = state.graph;
      save_checkpoint((dir / strcat("ckpt_step", done, ".bin")).string(), ck);
      std::vector<double> m(state.graph.m.size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = double(state.graph.m[i]);
      write_graph_csv((dir / strcat("graph_step", done, ".csv")).string(), m, state.graph.p);
    }
  }
  return result;
}

struct AblationRow {
  std::string flavor;
  std::string seed;  // number, or "mean"
  double target_acc = 0;
};

inline RunConfig ablation_variant(const RunConfig& base, const std::string& flavor,
                                  std::uint64_t seed) {
  RunConfig cfg = base;
  cfg.seed = seed;
  cfg.run_name.clear();  // let run_label derive flavor_sN
  if (flavor == "full") {
  } else if (flavor == "no_ff") {
    cfg.feature_fusion = false;
  } else if (flavor == "no_tgsa") {
    cfg.tg_guidance = false;
  } else if (flavor == "source_only") {
    cfg.alpha = cfg.beta = cfg.gamma = 0.0;
  } else {
    throw Error(strcat("unknown ablation flavor '", flavor, "'"));
  }
  return cfg;
}

inline const std::vector<std::string>& ablation_flavors() {
  static const std::vector<std::string> f = {"full", "no_ff", "no_tgsa", "source_only"};
  return f;
}

// One run per flavor per seed (jobs in parallel), then per-flavor means.
// Rows land in <out_dir>/ablation.csv and come back for printing.
template <typename T>
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                      std::size_t jobs, const LabeledSet& src_train,
                                      const UnlabeledSet& tgt_train, const EvalSet& src_test,
                                      const EvalSet& tgt_test, std::ostream* progress = nullptr) {
  check(!seeds.empty(), "ablation needs at least one seed");
  struct Job {
    std::string flavor;
    std::uint64_t seed;
    double acc = 0;
  };
  std::vector<Job> grid;
  for (const auto& flavor : ablation_flavors())
    for (auto seed : seeds) grid.push_back({flavor, seed, 0});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      RunConfig cfg = ablation_variant(base, grid[i].flavor, grid[i].seed);
      RunResult r = train_run<T>(cfg, src_train, tgt_train, src_test, tgt_test, {}, nullptr);
      grid[i].acc = r.target_test_acc;
      if (progress)
        *progress << run_label(cfg) << " target_test " << r.target_test_acc << "\n";
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < std::min(jobs, grid.size()); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<AblationRow> rows;
  for (const auto& j : grid) rows.push_back({j.flavor, std::to_string(j.seed), j.acc});
  for (const auto& flavor : ablation_flavors()) {
    double sum = 0;
    for (const auto& j : grid)
      if (j.flavor == flavor) sum += j.acc;
    rows.push_back({flavor, "mean", sum / double(seeds.size())});
  }

  const std::filesystem::path table = std::filesystem::path(base.out_dir) / "ablation.csv";
  std::filesystem::create_directories(base.out_dir);
  std::ofstream out(table);
  check(out.good(), "cannot write ", table.string());
  out << "config,seed,target_accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.target_acc);
    out << r.flavor << "," << r.seed << "," << buf << "\n";
  }
  return rows;
}

}  // namespace fftat
