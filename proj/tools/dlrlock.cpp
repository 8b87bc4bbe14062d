// dlrlock command-line workbench: locking pipeline, attack suite, analyses,
// and benchmarks, all driven by JSON configs.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "dlrlock/artifacts.hpp"
#include "dlrlock/attacks.hpp"
#include "dlrlock/bench.hpp"
#include "dlrlock/config.hpp"
#include "dlrlock/model_io.hpp"

namespace dlrlock {
namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  std::size_t jobs = 0;
};

ExperimentConfig load_checked(const CommonArgs& args, const std::string& expected_kind) {
  ExperimentConfig cfg = load_config_file(args.config_path);
  if (cfg.experiment != expected_kind)
    throw ConfigError("config experiment '" + cfg.experiment + "' does not match subcommand '" +
                      expected_kind + "'");
  if (!args.out_override.empty()) cfg.out = args.out_override;
  if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
  if (args.jobs > 0) cfg.jobs = args.jobs;
  return cfg;
}

TransformerParams load_model_checked(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("model checkpoint not found: " + path);
  return load_model(path);
}

nlohmann::json timing_to_json(const TimingReport& t) {
  nlohmann::json j;
  j["mean_forward_s"] = t.mean_forward();
  j["mean_backward_s"] = t.mean_backward();
  j["mean_optimizer_s"] = t.mean_optimizer();
  j["mean_total_s"] = t.mean_total();
  j["p50_total_s"] = t.p50_total();
  j["p95_total_s"] = t.p95_total();
  j["backward_fraction"] = t.backward_fraction();
  j["training_overhead_ratio"] = t.training_overhead_ratio();
  j["resolution_warning"] = t.resolution_warning;
  return j;
}

// ---------------------------------------------------------------------------

int run_lock(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    ByteCorpus corpus = load_byte_corpus(cfg.lock.corpus);
    TransformerParams teacher;
    if (!cfg.lock.teacher.checkpoint.empty() &&
        std::filesystem::exists(cfg.lock.teacher.checkpoint)) {
      teacher = load_model(cfg.lock.teacher.checkpoint);
      std::cout << "loaded teacher from " << cfg.lock.teacher.checkpoint << "\n";
    } else {
      std::cout << "training toy teacher (" << cfg.lock.teacher.train.steps << " steps)\n";
      teacher = init_transformer(cfg.lock.teacher.arch, Rng(cfg.seed).substream("teacher"));
      TrainLmConfig tcfg = cfg.lock.teacher.train;
      tcfg.seed = cfg.seed;
      TrajectoryRecord rec = train_language_model(teacher, corpus, tcfg);
      w.write_csv("teacher_train.csv", train_trajectories_to_csv({rec}));
      if (!cfg.lock.teacher.checkpoint.empty()) {
        save_model(cfg.lock.teacher.checkpoint, teacher);
        std::cout << "saved teacher to " << cfg.lock.teacher.checkpoint << "\n";
      }
    }

    LockConfig lc = cfg.lock.lock;
    lc.jobs = cfg.jobs;
    lc.collect.seed = cfg.seed;
    lc.phase1.seed = cfg.seed;
    lc.phase2.seed = cfg.seed;
    LockResult res = lock_model(teacher, corpus, lc);

    const std::string locked_path = cfg.out + "/" + cfg.lock.save_locked;
    save_model(locked_path, res.locked);
    w.note_binary(cfg.lock.save_locked);

    CsvTable quality;
    quality.columns = {"stage", "layer", "metric", "value"};
    for (const auto& row : res.report)
      quality.add_row({row.stage, row.layer, row.metric, format_double(row.value)});
    w.write_csv("quality.csv", quality);

    std::vector<TrajectoryRecord> p1;
    for (const auto& r : res.phase1) p1.push_back(r.trajectory);
    w.write_csv("phase1.csv", train_trajectories_to_csv(p1));
    w.write_csv("phase2.csv", train_trajectories_to_csv({res.phase2.trajectory}));
    w.write_text("phase1.svg", trajectories_to_svg(p1, "module-wise distillation", false));

    nlohmann::json summary;
    summary["teacher_ppl"] = res.teacher_ppl;
    summary["phase1_ppl"] = res.phase1_ppl;
    summary["locked_ppl"] = res.locked_ppl;
    summary["ppl_ratio"] = res.locked_ppl / res.teacher_ppl;
    summary["heldout_kl_before"] = res.phase2.heldout_kl_before;
    summary["heldout_kl_after"] = res.phase2.heldout_kl_after;
    summary["locked_params"] = param_count(res.locked);
    summary["teacher_params"] = param_count(teacher);
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    std::cout << "teacher ppl " << res.teacher_ppl << ", phase1 ppl " << res.phase1_ppl
              << ", locked ppl " << res.locked_ppl << "\n";
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_finetune(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    ByteCorpus corpus = load_byte_corpus(cfg.finetune.corpus);
    TransformerParams locked = load_model_checked(cfg.finetune.locked_model);
    TransformerParams baseline = load_model_checked(cfg.finetune.baseline_model);

    std::vector<TrajectoryRecord> trajs;
    CsvTable timing;
    timing.columns = {"model", "lr", "mean_forward_s", "mean_backward_s", "mean_optimizer_s",
                      "backward_fraction", "training_overhead_ratio", "p50_total_s",
                      "p95_total_s", "diverged"};
    nlohmann::json kappas = nlohmann::json::array();

    for (double lr : cfg.finetune.lrs) {
      FinetuneConfig fc;
      fc.lr = lr;
      fc.steps = cfg.finetune.steps;
      fc.batch = cfg.finetune.batch;
      fc.seq_len = cfg.finetune.seq_len;
      fc.element_budget = cfg.finetune.element_budget;
      fc.seed = cfg.seed;

      TransformerParams base_copy = clone_model(baseline);
      FinetuneResult rb = finetune_attack(base_copy, corpus, fc);
      rb.traj.config_id = "baseline_lr" + format_shorthand(lr);

      fc.checkpoint_interval = cfg.finetune.checkpoint_interval;
      TransformerParams lock_copy = clone_model(locked);
      FinetuneResult rl = finetune_attack(lock_copy, corpus, fc);
      rl.traj.config_id = "locked_lr" + format_shorthand(lr);

      for (const auto* r : {&rb, &rl}) {
        const bool is_locked = r == &rl;
        timing.add_row({is_locked ? "locked" : "baseline", format_shorthand(lr),
                        format_double(r->timing.mean_forward()),
                        format_double(r->timing.mean_backward()),
                        format_double(r->timing.mean_optimizer()),
                        format_double(r->timing.backward_fraction()),
                        format_double(r->timing.training_overhead_ratio()),
                        format_double(r->timing.p50_total()),
                        format_double(r->timing.p95_total()), r->diverged ? "1" : "0"});
      }
      nlohmann::json kj;
      kj["lr"] = lr;
      kj["baseline_start"] = rb.traj.series.front().loss;
      kj["locked_start"] = rl.traj.series.front().loss;
      kj["baseline_min"] = rb.traj.min_loss();
      kj["locked_min"] = rl.traj.min_loss();
      kj["baseline_diverged"] = rb.diverged;
      kj["locked_diverged"] = rl.diverged;
      kj["baseline_backward_fraction"] = rb.timing.backward_fraction();
      kj["locked_backward_fraction"] = rl.timing.backward_fraction();
      if (!rb.diverged && !rl.diverged) {
        const double target = std::max(rb.traj.min_loss(), rl.traj.min_loss());
        EmpiricalKappa k = empirical_kappa(rb.traj, rl.traj, target);
        kj["target_loss"] = target;
        kj["kappa_wallclock"] = k.wallclock_ratio;
        kj["kappa_tokens"] = k.token_ratio;
      }
      kappas.push_back(kj);
      trajs.push_back(rb.traj);
      trajs.push_back(rl.traj);
    }
    w.write_csv("finetune.csv", train_trajectories_to_csv(trajs));
    w.write_csv("timing.csv", timing);
    w.write_text("loss_vs_tokens.svg",
                 trajectories_to_svg(trajs, "fine-tuning: loss vs tokens", false));
    w.write_text("loss_vs_wallclock.svg",
                 trajectories_to_svg(trajs, "fine-tuning: loss vs wall-clock", true));
    nlohmann::json summary;
    summary["runs"] = kappas;
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_partial(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    ByteCorpus corpus = load_byte_corpus(cfg.partial.corpus);
    std::vector<TrajectoryRecord> trajs;
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& mode_name : cfg.partial.modes) {
      PartialMode mode;
      if (mode_name == "freeze_dlr")
        mode = PartialMode::freeze_dlr;
      else if (mode_name == "stop_grad_dlr")
        mode = PartialMode::stop_grad_dlr;
      else
        throw ConfigError("unknown partial mode '" + mode_name + "'");
      TransformerParams model = load_model_checked(cfg.partial.locked_model);
      PartialResult res = partial_update_attack(model, corpus, mode, cfg.partial.lr,
                                                cfg.partial.steps, cfg.seed,
                                                cfg.partial.seq_len, cfg.partial.batch);
      trajs.push_back(res.traj);
      nlohmann::json j;
      j["mode"] = mode_name;
      j["per_layer_saved_elements"] = res.per_layer_saved_elements;
      j["bias_ratio"] = res.bias_ratio;
      j["diverged"] = res.diverged;
      summary.push_back(j);
    }
    w.write_csv("partial.csv", train_trajectories_to_csv(trajs));
    w.write_json("summary.json", nlohmann::json{{"modes", summary}});
    w.write_manifest(cfg.original_text, cfg.seed);
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_lora(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    ByteCorpus corpus = load_byte_corpus(cfg.lora.corpus);
    TransformerParams model = load_model_checked(cfg.lora.locked_model);
    LoraAttackResult res = lora_attack(model, corpus, cfg.lora.targets, cfg.lora.rank,
                                       cfg.lora.lr, cfg.lora.steps, cfg.seed);
    w.write_csv("lora.csv", train_trajectories_to_csv({res.traj}));
    nlohmann::json summary;
    summary["dlr_per_layer_saved"] = res.dlr_per_layer_saved;
    summary["targets"] = cfg.lora.targets;
    summary["rank"] = cfg.lora.rank;
    summary["diverged"] = res.diverged;
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

nlohmann::json sweep_summary_json(const PenaltySweepResult& res) {
  // endpoint analysis against the a=10 symmetry reference
  double star10 = 0.0, star10_err = 0.0;
  for (const auto& sp : res.stars)
    if (sp.a == 10.0) {
      star10 = sp.omega_rel;
      star10_err = sp.rel_error;
    }
  double max_omega_low_err = 0.0;
  std::size_t corner_count = 0;
  for (const auto& tr : res.trajectories) {
    const auto& e = tr.endpoint();
    if (e.loss <= 0.01) max_omega_low_err = std::max(max_omega_low_err, e.omega);
    if (e.loss <= 0.01 && e.omega >= 0.5 * star10) ++corner_count;
  }
  nlohmann::json j;
  j["omega"] = omega_kind_name(res.omega);
  j["scope"] = sweep_scope_name(res.scope);
  j["base_accuracy"] = res.base_accuracy;
  j["base_ce"] = res.base_ce;
  j["star10_omega_rel"] = star10;
  j["star10_rel_error"] = star10_err;
  j["max_endpoint_omega_with_err_le_0.01"] = max_omega_low_err;
  j["corner_violations"] = corner_count;
  j["trajectories"] = res.trajectories.size();
  return j;
}

int run_penalty(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    nlohmann::json panels = nlohmann::json::array();
    nlohmann::json manifest_cells = nlohmann::json::array();
    for (OmegaKind kind : cfg.penalty.omega_kinds) {
      const std::vector<SweepScope> scopes =
          kind == OmegaKind::delta_norm_sq ? std::vector<SweepScope>{SweepScope::all}
                                           : cfg.penalty.scopes;
      for (SweepScope scope : scopes) {
        PenaltySweepConfig sc = cfg.penalty.sweep;
        sc.omega = kind;
        sc.scope = scope;
        sc.master_seed = cfg.seed;
        sc.jobs = cfg.jobs;
        PenaltySweepResult res = penalty_lock_sweep(sc);
        const std::string tag = omega_kind_name(kind) + "_" + sweep_scope_name(scope);
        w.write_csv("sweep_" + tag + ".csv", trajectories_to_csv(res.trajectories));
        CsvTable stars;
        stars.columns = {"a", "rel_error", "omega_rel"};
        for (const auto& sp : res.stars)
          stars.add_row({format_double(sp.a), format_double(sp.rel_error),
                         format_double(sp.omega_rel)});
        w.write_csv("stars_" + tag + ".csv", stars);
        // error-vs-omega panel, one path per trajectory
        std::vector<SvgSeries> series;
        for (const auto& tr : res.trajectories) {
          SvgSeries s;
          s.label = tr.config_id;
          for (const auto& p : tr.series) {
            s.x.push_back(p.loss);
            s.y.push_back(p.omega);
          }
          series.push_back(std::move(s));
        }
        w.write_text("sweep_" + tag + ".svg",
                     svg_line_plot(series, "penalty sweep " + tag, "relative error",
                                   "relative omega"));
        panels.push_back(sweep_summary_json(res));
        for (const auto& cell : res.trajectories) manifest_cells.push_back(cell.config_id);
      }
    }
    nlohmann::json summary;
    summary["panels"] = panels;
    w.write_json("summary.json", summary);
    w.write_json("sweep_manifest.json",
                 nlohmann::json{{"cells", manifest_cells}, {"seed", cfg.seed}});
    w.write_manifest(cfg.original_text, cfg.seed);
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_rebalance(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    Rng rng(cfg.seed, 21);
    const std::size_t d = cfg.rebalance.d;
    Matrix w1 = rng_fill(rng, d, d, NormalDist{0.0, 1.0});
    Matrix w2 = rng_fill(rng, d, d, NormalDist{0.0, 1.0});
    auto [ref_l, ref_r] = svd_rebalance(w2, w1);
    CsvTable t;
    t.columns = {"trial", "cond_A", "bit_identical"};
    std::size_t stable = 0;
    for (std::size_t trial = 0; trial < cfg.rebalance.insertions; ++trial) {
      Matrix a = rng_fill(rng, d, d, NormalDist{0.0, 1.0});
      SvdResult sa = svd_small(a);
      const double cond = sa.s.front() / sa.s.back();
      if (cond > cfg.rebalance.cond_max) continue;
      auto [m2, m1] = insert_invertible(w1, w2, a);
      auto [l, r] = svd_rebalance(m2, m1);
      bool same = l.same_shape(ref_l) && r.same_shape(ref_r);
      if (same)
        for (std::size_t i = 0; i < l.size() && same; ++i)
          same = l.data()[i] == ref_l.data()[i];
      if (same)
        for (std::size_t i = 0; i < r.size() && same; ++i)
          same = r.data()[i] == ref_r.data()[i];
      stable += same ? 1 : 0;
      t.add_row({std::to_string(trial), format_double(cond), same ? "1" : "0"});
    }
    w.write_csv("rebalance.csv", t);
    nlohmann::json summary;
    summary["trials"] = t.rows.size();
    summary["bit_stable"] = stable;
    summary["all_stable"] = stable == t.rows.size();
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    std::cout << "rebalance bit-stable in " << stable << "/" << t.rows.size() << " insertions\n";
    return stable == t.rows.size() ? 0 : 1;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_reverse(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    ByteCorpus corpus = load_byte_corpus(cfg.reverse.corpus);
    TransformerParams locked = load_model_checked(cfg.reverse.locked_model);
    ReverseConfig rc = cfg.reverse.reverse;
    rc.jobs = cfg.jobs;
    rc.collect.seed = cfg.seed;
    rc.train.seed = cfg.seed;
    ReverseResult res = reverse_distill(locked, corpus, rc);
    save_model(cfg.out + "/reversed.dlrl", res.reversed);
    w.note_binary("reversed.dlrl");
    CsvTable t;
    t.columns = {"layer", "relative_mse"};
    for (std::size_t l = 0; l < res.per_layer_mse.size(); ++l)
      t.add_row({std::to_string(l), format_double(res.per_layer_mse[l])});
    w.write_csv("reverse.csv", t);
    nlohmann::json summary;
    summary["total_steps"] = res.total_steps;
    summary["total_wallclock_s"] = res.total_wallclock_s;
    summary["locked_ppl"] = res.locked_ppl;
    summary["reversed_ppl"] = res.reversed_ppl;
    summary["ppl_ratio_vs_locked"] = res.reversed_ppl / res.locked_ppl;
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    std::cout << "reverse distilled " << res.per_layer_mse.size() << " layers in "
              << res.total_wallclock_s << " s; reversed ppl " << res.reversed_ppl << "\n";
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_memory(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    CsvTable t;
    t.columns = {"layer", "mode", "predicted_elements", "measured_elements", "peak_elements",
                 "predicted_bytes"};
    bool all_match = true;
    const std::size_t width = cfg.memory.element_width;
    for (const auto& cell : cfg.memory.cells) {
      MemoryPrediction pred = predicted_activation_memory(cell.d, cell.r, cell.depth, cell.d_ff);
      for (const std::string& mode : {std::string("full"), std::string("frozen")}) {
        const long long per_layer =
            mode == "full" ? pred.full_per_layer : pred.frozen_per_layer;
        const long long total = mode == "full" ? pred.full_total : pred.frozen_total;
        long long measured_total = -1, peak = -1;
        std::vector<long long> measured_layers;
        if (cell.measure) {
          DlrNetParams net =
              init_dlrnet(cell.d, cell.r, cell.depth, Rng(cfg.seed).substream("mem"));
          Tape tape(mode == "full" ? TapeMode::train_full : TapeMode::train_frozen);
          Matrix z(1, cell.d, 0.5);
          Var x = tape.input(z, true);
          for (std::size_t i = 0; i < net.layers.size(); ++i) {
            tape.push_scope("dlr" + std::to_string(i));
            x = dlr_layer(tape, x, net.layers[i]);
            tape.pop_scope();
          }
          measured_total = tape.meter().saved_elements();
          peak = tape.meter().peak_elements();
          for (std::size_t i = 0; i < net.layers.size(); ++i)
            measured_layers.push_back(tape.meter().scope_elements("dlr" + std::to_string(i)));
          for (long long v : measured_layers) all_match = all_match && v == per_layer;
          all_match = all_match && measured_total == total;
        }
        const std::string label = "d" + std::to_string(cell.d) + "_r" + std::to_string(cell.r) +
                                  "_L" + std::to_string(cell.depth);
        t.add_row({label + "_per_layer", mode, std::to_string(per_layer),
                   cell.measure && !measured_layers.empty() ? std::to_string(measured_layers[0])
                                                            : "-",
                   "-", std::to_string(MemoryPrediction::bytes(per_layer, width))});
        t.add_row({label + "_total", mode, std::to_string(total),
                   cell.measure ? std::to_string(measured_total) : "-",
                   cell.measure ? std::to_string(peak) : "-",
                   std::to_string(MemoryPrediction::bytes(total, width))});
      }
      if (cell.d_ff)
        t.add_row({"swiglu_d" + std::to_string(cell.d) + "_dff" + std::to_string(cell.d_ff),
                   "full", std::to_string(pred.swiglu_baseline), "-", "-",
                   std::to_string(MemoryPrediction::bytes(pred.swiglu_baseline, width))});
    }
    w.write_csv("memory.csv", t);
    w.write_json("summary.json", nlohmann::json{{"all_match", all_match}});
    w.write_manifest(cfg.original_text, cfg.seed);
    std::cout << (all_match ? "predicted = measured for all cells\n"
                            : "MISMATCH between predicted and measured\n");
    return all_match ? 0 : 1;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_kappa(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    nlohmann::json summary;
    if (cfg.kappa.mode == "bound") {
      CsvTable t;
      t.columns = {"d", "r", "L", "d_ff", "a_attn", "kappa_bound"};
      for (const auto& c : cfg.kappa.cells)
        t.add_row({format_double(c.d), format_double(c.r), format_double(c.depth),
                   format_double(c.d_ff), format_double(c.a_attn),
                   format_double(kappa_bound(c.d, c.r, c.depth, c.d_ff, c.a_attn))});
      w.write_csv("kappa_bound.csv", t);
      summary["cells"] = cfg.kappa.cells.size();
    } else {
      std::ifstream bi(cfg.kappa.baseline_csv), li(cfg.kappa.locked_csv);
      if (!bi || !li) throw ConfigError("kappa: cannot open trajectory csv inputs");
      std::string btext((std::istreambuf_iterator<char>(bi)), std::istreambuf_iterator<char>());
      std::string ltext((std::istreambuf_iterator<char>(li)), std::istreambuf_iterator<char>());
      auto base = parse_trajectories_csv(btext);
      auto locked = parse_trajectories_csv(ltext);
      if (base.empty() || locked.empty()) throw ConfigError("kappa: empty trajectories");
      EmpiricalKappa k = empirical_kappa(base.front(), locked.front(), cfg.kappa.target_loss);
      summary["target_loss"] = cfg.kappa.target_loss;
      summary["kappa_wallclock"] = k.wallclock_ratio;
      summary["kappa_tokens"] = k.token_ratio;
      summary["locked_reached"] = k.locked_reached;
      std::cout << "empirical kappa (wall-clock) = " << k.wallclock_ratio << "\n";
    }
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_condition(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    CsvTable t;
    t.columns = {"pair", "d", "a", "kappa_numeric", "lower_bound", "ok", "block_rel_err"};
    Rng rng(cfg.seed, 31);
    std::size_t ok = 0, total = 0;
    double worst_block = 0.0;
    for (std::size_t pair = 0; pair < cfg.condition.pairs; ++pair) {
      const std::size_t d = cfg.condition.dims[pair % cfg.condition.dims.size()];
      const double sd = 1.0 / std::sqrt(static_cast<double>(d));
      Matrix w1 = rng_fill(rng, d, d, NormalDist{0.0, sd});
      Matrix w2 = rng_fill(rng, d, d, NormalDist{0.0, sd});
      for (double a : cfg.condition.a_values) {
        HessianReport rep = hessian_conditioning_report(w1, w2, a, cfg.condition.eps);
        const bool pass = rep.condition_number >= rep.lower_bound;
        ok += pass ? 1 : 0;
        ++total;
        worst_block = std::max(worst_block, rep.block_rel_err);
        t.add_row({std::to_string(pair), std::to_string(d), format_double(a),
                   format_double(rep.condition_number), format_double(rep.lower_bound),
                   pass ? "1" : "0", format_double(rep.block_rel_err)});
      }
    }
    w.write_csv("condition.csv", t);
    nlohmann::json summary;
    summary["cases"] = total;
    summary["passed"] = ok;
    summary["max_block_rel_err"] = worst_block;
    summary["all_passed"] = ok == total;
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    std::cout << "condition bound held in " << ok << "/" << total << " cases\n";
    return ok == total ? 0 : 1;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_hutchinson(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    LossWithGrad f;
    std::vector<double> theta;
    double truth = 0.0;
    if (cfg.hutchinson.problem == "quadratic") {
      const std::vector<double> diag = cfg.hutchinson.diag;
      for (double v : diag) truth += v;
      theta.assign(diag.size(), 0.1);
      f = [diag](const std::vector<double>& th) {
        double loss = 0.0;
        std::vector<double> g(th.size());
        for (std::size_t i = 0; i < th.size(); ++i) {
          loss += 0.5 * diag[i] * th[i] * th[i];
          g[i] = diag[i] * th[i];
        }
        return std::make_pair(loss, g);
      };
    } else if (cfg.hutchinson.problem == "matfac") {
      const std::size_t d = cfg.hutchinson.d;
      Rng rng(cfg.seed, 5);
      const double sd = 1.0 / std::sqrt(static_cast<double>(d));
      Matrix w1 = rng_fill(rng, d, d, NormalDist{0.0, sd}) * (1.0 / cfg.hutchinson.a);
      Matrix w2 = rng_fill(rng, d, d, NormalDist{0.0, sd}) * cfg.hutchinson.a;
      Matrix m = rng_fill(rng, d, d, NormalDist{0.0, sd});
      auto [h11, h22] = matfac_hessian_blocks(w1, w2);
      for (std::size_t i = 0; i < h11.rows(); ++i) truth += h11(i, i);
      for (std::size_t i = 0; i < h22.rows(); ++i) truth += h22(i, i);
      theta = vec_cm(w1);
      auto t2 = vec_cm(w2);
      theta.insert(theta.end(), t2.begin(), t2.end());
      f = matfac_objective(m, d);
    } else {
      throw ConfigError("hutchinson.problem must be 'quadratic' or 'matfac'");
    }
    TraceEstimate e = hutchinson_trace(f, theta, cfg.hutchinson.probes, Rng(cfg.seed, 6));
    nlohmann::json summary;
    summary["problem"] = cfg.hutchinson.problem;
    summary["probes"] = e.probes;
    summary["estimate"] = e.estimate;
    summary["stderr"] = e.stderr_;
    summary["true_trace"] = truth;
    summary["abs_rel_err"] = std::abs(e.estimate - truth) / std::max(std::abs(truth), 1e-300);
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    std::cout << "hutchinson estimate " << e.estimate << " (true " << truth << ")\n";
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_matfac(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    MatfacConfig mc = cfg.matfac;
    mc.master_seed = cfg.seed;
    mc.jobs = cfg.jobs;
    std::vector<MatfacCell> cells = matfac_experiment(mc);
    std::vector<TrajectoryRecord> trajs;
    CsvTable t;
    t.columns = {"config_id", "optimizer", "lr", "a", "seed", "initial_loss", "final_loss",
                 "steps_to_threshold", "diverged", "grad_w1_norm", "grad_w2_norm"};
    for (const auto& c : cells) {
      trajs.push_back(c.traj);
      double g1 = 0.0, g2 = 0.0;
      for (const auto& [k, v] : c.traj.extras) {
        if (k == "grad_w1_norm") g1 = v;
        if (k == "grad_w2_norm") g2 = v;
      }
      t.add_row({c.traj.config_id, c.optimizer, format_shorthand(c.lr), format_shorthand(c.a),
                 std::to_string(c.seed), format_double(c.initial_loss),
                 format_double(c.final_loss),
                 c.steps_to_threshold == static_cast<std::size_t>(-1)
                     ? "unreached"
                     : std::to_string(c.steps_to_threshold),
                 c.diverged ? "1" : "0", format_double(g1), format_double(g2)});
    }
    w.write_csv("matfac_cells.csv", t);
    w.write_csv("matfac_traj.csv", train_trajectories_to_csv(trajs));
    w.write_text("matfac.svg", trajectories_to_svg(trajs, "matrix factorization", false));
    nlohmann::json summary = nlohmann::json::array();
    for (const std::string opt : {"sgd", "adam"}) {
      for (double a : {1.0, mc.a}) {
        for (double lr : opt == "sgd" ? mc.sgd_lrs : mc.adam_lrs) {
          std::vector<double> finals;
          std::vector<double> steps;
          std::size_t div = 0, n = 0;
          for (const auto& c : cells)
            if (c.optimizer == opt && c.a == a && c.lr == lr) {
              ++n;
              div += c.diverged ? 1 : 0;
              finals.push_back(c.final_loss / c.initial_loss);
              steps.push_back(c.steps_to_threshold == static_cast<std::size_t>(-1)
                                  ? std::numeric_limits<double>::infinity()
                                  : static_cast<double>(c.steps_to_threshold));
            }
          std::sort(finals.begin(), finals.end());
          std::sort(steps.begin(), steps.end());
          nlohmann::json j;
          j["optimizer"] = opt;
          j["a"] = a;
          j["lr"] = lr;
          j["seeds"] = n;
          j["diverged"] = div;
          j["median_final_rel"] = finals.empty() ? 0.0 : finals[finals.size() / 2];
          const double med_steps = steps.empty() ? 0.0 : steps[steps.size() / 2];
          if (std::isfinite(med_steps))
            j["median_steps_to_threshold"] = med_steps;
          else
            j["median_steps_to_threshold"] = "unreached";
          summary.push_back(j);
        }
      }
    }
    w.write_json("summary.json", nlohmann::json{{"cells", summary}});
    w.write_manifest(cfg.original_text, cfg.seed);
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_bench(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    ByteCorpus corpus = load_byte_corpus(cfg.bench.corpus);
    TransformerParams baseline = load_model_checked(cfg.bench.baseline_model);
    TransformerParams locked = load_model_checked(cfg.bench.locked_model);
    BenchStepConfig bc;
    bc.steps = cfg.bench.steps;
    bc.warmup = cfg.bench.warmup;
    bc.batch = cfg.bench.batch;
    bc.seq_len = cfg.bench.seq_len;
    bc.seed = cfg.seed;

    nlohmann::json summary;
    CsvTable t;
    t.columns = {"model", "mode", "mean_forward_s", "mean_backward_s", "mean_optimizer_s",
                 "backward_fraction", "training_overhead_ratio", "p50_total_s", "p95_total_s"};
    auto add = [&](const std::string& name, const std::string& mode, const TimingReport& r) {
      t.add_row({name, mode, format_double(r.mean_forward()), format_double(r.mean_backward()),
                 format_double(r.mean_optimizer()), format_double(r.backward_fraction()),
                 format_double(r.training_overhead_ratio()), format_double(r.p50_total()),
                 format_double(r.p95_total())});
      summary[name + "_" + mode] = timing_to_json(r);
    };
    add("baseline", "inference", time_step_split(baseline, corpus, bc, TapeMode::inference));
    add("baseline", "train", time_step_split(baseline, corpus, bc, TapeMode::train_full));
    BenchStepConfig lc = bc;
    lc.checkpoint_interval = cfg.bench.locked_checkpoint_interval;
    add("locked", "inference", time_step_split(locked, corpus, lc, TapeMode::inference));
    add("locked", "train", time_step_split(locked, corpus, lc, TapeMode::train_full));
    w.write_csv("bench.csv", t);
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

int run_eval(const ExperimentConfig& cfg) {
  ArtifactWriter w(cfg.out);
  try {
    ByteCorpus corpus = load_byte_corpus(cfg.eval.corpus);
    TransformerParams model = load_model_checked(cfg.eval.model);
    const double ppl = evaluate_perplexity(model, corpus.heldout_tokens(), cfg.eval.seq_len);
    nlohmann::json summary;
    summary["model"] = cfg.eval.model;
    summary["heldout_perplexity"] = ppl;
    summary["heldout_tokens"] = corpus.heldout_size();
    w.write_json("summary.json", summary);
    w.write_manifest(cfg.original_text, cfg.seed);
    std::cout << "held-out perplexity: " << ppl << "\n";
    return 0;
  } catch (...) {
    w.remove_all();
    throw;
  }
}

}  // namespace
}  // namespace dlrlock

int main(int argc, char** argv) {
  using namespace dlrlock;
  CLI::App app{"dlrlock: model-locking workbench (distillation, attacks, analyses)"};
  app.require_subcommand(1);

  struct Cmd {
    CLI::App* sub = nullptr;
    CommonArgs args;
    std::function<int(const ExperimentConfig&)> run;
    std::string kind;
  };
  std::vector<std::shared_ptr<Cmd>> cmds;
  auto add_cmd = [&](CLI::App* parent, const std::string& name, const std::string& desc,
                     const std::string& kind, std::function<int(const ExperimentConfig&)> fn) {
    auto c = std::make_shared<Cmd>();
    c->sub = parent->add_subcommand(name, desc);
    c->run = std::move(fn);
    c->kind = kind;
    c->sub->add_option("--config", c->args.config_path, "JSON experiment config")->required();
    c->sub->add_option("--out", c->args.out_override, "output directory override");
    c->sub->add_option("--seed", c->args.seed_override, "master seed override");
    c->sub->add_option("--jobs", c->args.jobs,
                       "concurrent cells (default: DLRLOCK_JOBS or hardware)");
    cmds.push_back(c);
  };

  add_cmd(&app, "lock", "two-phase locking pipeline", "lock", run_lock);
  CLI::App* attack = app.add_subcommand("attack", "adaptive attacker toolbox");
  attack->require_subcommand(1);
  add_cmd(attack, "finetune", "full fine-tuning attack, locked vs baseline", "finetune",
          run_finetune);
  add_cmd(attack, "partial", "partial-update attack (freeze / stop-grad)", "partial", run_partial);
  add_cmd(attack, "penalty", "penalty-based locking sweep", "penalty", run_penalty);
  add_cmd(attack, "rebalance", "canonical svd rebalance stability", "rebalance", run_rebalance);
  add_cmd(attack, "reverse", "reverse module-wise distillation", "reverse", run_reverse);
  add_cmd(attack, "lora", "low-rank adapter fine-tuning", "lora", run_lora);
  CLI::App* analyze = app.add_subcommand("analyze", "closed-form predictions and verification");
  analyze->require_subcommand(1);
  add_cmd(analyze, "memory", "activation-memory prediction vs measurement", "memory", run_memory);
  add_cmd(analyze, "kappa", "locking-factor bound / empirical ratio", "kappa", run_kappa);
  add_cmd(analyze, "condition", "scaled-factorization conditioning check", "condition",
          run_condition);
  add_cmd(analyze, "hutchinson", "trace estimator check", "hutchinson", run_hutchinson);
  add_cmd(&app, "matfac", "scaled-initialization factorization experiment", "matfac", run_matfac);
  add_cmd(&app, "bench", "per-phase step timing, baseline vs locked", "bench", run_bench);
  add_cmd(&app, "eval", "held-out perplexity of a checkpoint", "eval", run_eval);

  if (argc <= 1) {
    std::cout << app.help();
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (const auto& c : cmds)
      if (c->sub->parsed()) return c->run(load_checked(c->args, c->kind));
    std::cerr << "error: no subcommand selected\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
