// Experiment configuration: strict JSON parsing (unknown keys are errors,
// never ignored) and lossless round-tripping for every experiment kind the
// CLI exposes.
#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlrlock/analysis.hpp"
#include "dlrlock/attacks.hpp"
#include "dlrlock/distill.hpp"

namespace dlrlock {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Wrapper that records which keys were consumed and rejects leftovers.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  template <class T>
  T require(const std::string& key) {
    mark(key);
    if (!j_.contains(key)) throw ConfigError(path_ + ": missing required key '" + key + "'");
    return get_as<T>(key);
  }
  template <class T>
  T value(const std::string& key, T def) {
    mark(key);
    if (!j_.contains(key)) return def;
    return get_as<T>(key);
  }
  bool has(const std::string& key) {
    mark(key);
    return j_.contains(key);
  }
  StrictObject child(const std::string& key) {
    mark(key);
    if (!j_.contains(key)) throw ConfigError(path_ + ": missing required object '" + key + "'");
    return StrictObject(j_.at(key), path_ + "." + key);
  }
  bool has_child(const std::string& key) const { return j_.contains(key) && j_.at(key).is_object(); }
  // Call after all keys have been consumed.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  template <class T>
  T get_as(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }
  void mark(const std::string& key) { seen_.insert(key); }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Per-experiment parameter bundles

struct TeacherSpec {
  std::string checkpoint;  // load when present on disk
  TrainLmConfig train;     // otherwise train a toy teacher and save it there
  ToyModelConfig arch;
};

struct LockExperiment {
  std::string corpus;
  TeacherSpec teacher;
  LockConfig lock;
  std::string save_locked = "locked.dlrl";
};

struct FinetuneExperiment {
  std::string corpus;
  std::string locked_model;
  std::string baseline_model;
  std::vector<double> lrs{3e-6, 1e-5, 3e-5, 1e-4};
  std::size_t steps = 200;
  std::size_t batch = 4;
  std::size_t seq_len = 32;
  std::size_t checkpoint_interval = 18;  // applied to the locked model
  long long element_budget = 0;
  double target_loss_drop = 0.02;  // empirical-kappa target: start*(1-drop)
};

struct PartialExperiment {
  std::string corpus;
  std::string locked_model;
  std::vector<std::string> modes{"freeze_dlr", "stop_grad_dlr"};
  double lr = 1e-4;
  std::size_t steps = 60;
  std::size_t batch = 4;
  std::size_t seq_len = 32;
};

struct LoraExperiment {
  std::string corpus;
  std::string locked_model;
  std::vector<std::string> targets{"wo"};
  std::size_t rank = 4;
  double lr = 1e-3;
  std::size_t steps = 60;
};

struct PenaltyExperiment {
  PenaltySweepConfig sweep;
  std::vector<OmegaKind> omega_kinds{OmegaKind::delta_norm_sq, OmegaKind::hessian_trace};
  std::vector<SweepScope> scopes{SweepScope::all};
};

struct RebalanceExperiment {
  std::size_t d = 8;
  std::size_t insertions = 10;
  double cond_max = 1e6;
};

struct ReverseExperiment {
  std::string corpus;
  std::string locked_model;
  ReverseConfig reverse;
};

struct MemoryCell {
  std::size_t d = 64, r = 4, depth = 85, d_ff = 256;
  bool measure = true;  // also run the tape and compare counters
};
struct MemoryExperiment {
  std::vector<MemoryCell> cells;
  std::size_t element_width = 8;
};

struct KappaExperiment {
  std::string mode = "bound";  // "bound" | "empirical"
  // bound cells
  struct Cell {
    double d = 1024, r = 32, depth = 141, d_ff = 3072, a_attn = 0;
  };
  std::vector<Cell> cells;
  // empirical inputs
  std::string baseline_csv, locked_csv;
  double target_loss = 0.0;
};

struct ConditionExperiment {
  std::size_t pairs = 20;
  std::vector<std::size_t> dims{2, 3, 4};
  std::vector<double> a_values{1.0, 10.0, 100.0};
  double eps = 1e-5;
};

struct HutchinsonExperiment {
  std::string problem = "quadratic";  // "quadratic" | "matfac"
  std::vector<double> diag{1.0, 2.0, 3.0};
  std::size_t d = 8;
  double a = 10.0;
  std::size_t probes = 10000;
};

struct BenchExperiment {
  std::string corpus;
  std::string baseline_model, locked_model;
  std::size_t steps = 30;
  std::size_t warmup = 5;
  std::size_t batch = 4;
  std::size_t seq_len = 32;
  std::size_t locked_checkpoint_interval = 18;
};

struct EvalExperiment {
  std::string corpus;
  std::string model;
  std::size_t seq_len = 32;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string out = "runs/out";
  std::size_t jobs = 0;

  LockExperiment lock;
  FinetuneExperiment finetune;
  PartialExperiment partial;
  LoraExperiment lora;
  PenaltyExperiment penalty;
  RebalanceExperiment rebalance;
  ReverseExperiment reverse;
  MemoryExperiment memory;
  KappaExperiment kappa;
  ConditionExperiment condition;
  HutchinsonExperiment hutchinson;
  MatfacConfig matfac;
  BenchExperiment bench;
  EvalExperiment eval;

  std::string original_text;  // raw config file content for hashing
};

// ---------------------------------------------------------------------------
// Parsing

inline OmegaKind omega_kind_from(const std::string& s) {
  if (s == "delta_norm_sq") return OmegaKind::delta_norm_sq;
  if (s == "hessian_trace") return OmegaKind::hessian_trace;
  throw ConfigError("unknown omega kind '" + s + "'");
}
inline SweepScope sweep_scope_from(const std::string& s) {
  if (s == "all") return SweepScope::all;
  if (s == "first_layer") return SweepScope::first_layer;
  if (s == "random_10pct") return SweepScope::random_10pct;
  if (s == "random_50pct") return SweepScope::random_50pct;
  throw ConfigError("unknown scope '" + s + "'");
}

namespace cfg_detail {

inline void parse_phase1(StrictObject o, Phase1Config& p) {
  p.steps = o.value("steps", p.steps);
  p.lr = o.value("lr", p.lr);
  p.batch = o.value("batch", p.batch);
  p.weight_decay = o.value("weight_decay", p.weight_decay);
  p.clip_norm = o.value("clip_norm", p.clip_norm);
  p.warmup_frac = o.value("warmup_frac", p.warmup_frac);
  p.record_every = o.value("record_every", p.record_every);
  o.finish();
}

inline void parse_phase2(StrictObject o, Phase2Config& p) {
  p.steps = o.value("steps", p.steps);
  p.lr = o.value("lr", p.lr);
  p.batch = o.value("batch", p.batch);
  p.seq_len = o.value("seq_len", p.seq_len);
  p.top_k = o.value("top_k", p.top_k);
  p.weight_decay = o.value("weight_decay", p.weight_decay);
  p.clip_norm = o.value("clip_norm", p.clip_norm);
  p.warmup_frac = o.value("warmup_frac", p.warmup_frac);
  p.record_every = o.value("record_every", p.record_every);
  o.finish();
}

inline void parse_collect(StrictObject o, CollectConfig& c) {
  c.n_tokens = o.value("n_tokens", c.n_tokens);
  c.seq_len = o.value("seq_len", c.seq_len);
  o.finish();
}

inline void parse_train_lm(StrictObject o, TrainLmConfig& t) {
  t.steps = o.value("steps", t.steps);
  t.lr = o.value("lr", t.lr);
  t.batch = o.value("batch", t.batch);
  t.seq_len = o.value("seq_len", t.seq_len);
  t.weight_decay = o.value("weight_decay", t.weight_decay);
  t.clip_norm = o.value("clip_norm", t.clip_norm);
  t.warmup_frac = o.value("warmup_frac", t.warmup_frac);
  t.record_every = o.value("record_every", t.record_every);
  o.finish();
}

inline void parse_arch(StrictObject o, ToyModelConfig& a) {
  a.vocab = o.value("vocab", a.vocab);
  a.d = o.value("d", a.d);
  a.n_layers = o.value("n_layers", a.n_layers);
  a.heads = o.value("heads", a.heads);
  a.d_ff = o.value("d_ff", a.d_ff);
  a.n_max = o.value("n_max", a.n_max);
  o.finish();
}

}  // namespace cfg_detail

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  c.original_text = text;
  StrictObject root(j, "config");
  c.experiment = root.require<std::string>("experiment");
  c.seed = root.value<std::uint64_t>("seed", 0);
  c.out = root.value<std::string>("out", "runs/" + c.experiment);
  c.jobs = root.value<std::size_t>("jobs", 0);

  if (c.experiment == "lock") {
    auto p = root.child("params");
    c.lock.corpus = p.require<std::string>("corpus");
    c.lock.save_locked = p.value<std::string>("save_locked", c.lock.save_locked);
    {
      auto t = p.child("teacher");
      c.lock.teacher.checkpoint = t.value<std::string>("checkpoint", "");
      if (t.has_child("train")) cfg_detail::parse_train_lm(t.child("train"), c.lock.teacher.train);
      if (t.has_child("arch")) cfg_detail::parse_arch(t.child("arch"), c.lock.teacher.arch);
      t.finish();
    }
    c.lock.lock.rank = p.value<std::size_t>("rank", c.lock.lock.rank);
    if (p.has_child("collect")) cfg_detail::parse_collect(p.child("collect"), c.lock.lock.collect);
    if (p.has_child("phase1")) cfg_detail::parse_phase1(p.child("phase1"), c.lock.lock.phase1);
    if (p.has_child("phase2")) cfg_detail::parse_phase2(p.child("phase2"), c.lock.lock.phase2);
    p.finish();
  } else if (c.experiment == "finetune") {
    auto p = root.child("params");
    c.finetune.corpus = p.require<std::string>("corpus");
    c.finetune.locked_model = p.require<std::string>("locked_model");
    c.finetune.baseline_model = p.require<std::string>("baseline_model");
    c.finetune.lrs = p.value<std::vector<double>>("lrs", c.finetune.lrs);
    c.finetune.steps = p.value<std::size_t>("steps", c.finetune.steps);
    c.finetune.batch = p.value<std::size_t>("batch", c.finetune.batch);
    c.finetune.seq_len = p.value<std::size_t>("seq_len", c.finetune.seq_len);
    c.finetune.checkpoint_interval =
        p.value<std::size_t>("checkpoint_interval", c.finetune.checkpoint_interval);
    c.finetune.element_budget = p.value<long long>("element_budget", c.finetune.element_budget);
    c.finetune.target_loss_drop = p.value<double>("target_loss_drop", c.finetune.target_loss_drop);
    p.finish();
  } else if (c.experiment == "partial") {
    auto p = root.child("params");
    c.partial.corpus = p.require<std::string>("corpus");
    c.partial.locked_model = p.require<std::string>("locked_model");
    c.partial.modes = p.value<std::vector<std::string>>("modes", c.partial.modes);
    c.partial.lr = p.value<double>("lr", c.partial.lr);
    c.partial.steps = p.value<std::size_t>("steps", c.partial.steps);
    c.partial.batch = p.value<std::size_t>("batch", c.partial.batch);
    c.partial.seq_len = p.value<std::size_t>("seq_len", c.partial.seq_len);
    p.finish();
  } else if (c.experiment == "lora") {
    auto p = root.child("params");
    c.lora.corpus = p.require<std::string>("corpus");
    c.lora.locked_model = p.require<std::string>("locked_model");
    c.lora.targets = p.value<std::vector<std::string>>("targets", c.lora.targets);
    c.lora.rank = p.value<std::size_t>("rank", c.lora.rank);
    c.lora.lr = p.value<double>("lr", c.lora.lr);
    c.lora.steps = p.value<std::size_t>("steps", c.lora.steps);
    p.finish();
  } else if (c.experiment == "penalty") {
    auto p = root.child("params");
    auto& s = c.penalty.sweep;
    s.lambda_count = p.value<std::size_t>("lambda_count", s.lambda_count);
    s.lambda_min = p.value<double>("lambda_min", s.lambda_min);
    s.lambda_max = p.value<double>("lambda_max", s.lambda_max);
    s.lrs = p.value<std::vector<double>>("lrs", s.lrs);
    s.steps = p.value<std::size_t>("steps", s.steps);
    s.batch = p.value<std::size_t>("batch", s.batch);
    s.probes = p.value<std::size_t>("probes", s.probes);
    s.clip_norm = p.value<double>("clip_norm", s.clip_norm);
    s.seeds = p.value<std::size_t>("seeds", s.seeds);
    s.eval_samples = p.value<std::size_t>("eval_samples", s.eval_samples);
    s.record_every = p.value<std::size_t>("record_every", s.record_every);
    s.input_dim = p.value<std::size_t>("input_dim", s.input_dim);
    s.hidden = p.value<std::size_t>("hidden", s.hidden);
    s.classes = p.value<std::size_t>("classes", s.classes);
    s.train_samples = p.value<std::size_t>("train_samples", s.train_samples);
    s.base_steps = p.value<std::size_t>("base_steps", s.base_steps);
    s.base_lr = p.value<double>("base_lr", s.base_lr);
    s.base_batch = p.value<std::size_t>("base_batch", s.base_batch);
    s.mnist_images = p.value<std::string>("mnist_images", "");
    s.mnist_labels = p.value<std::string>("mnist_labels", "");
    s.star_scales = p.value<std::vector<double>>("star_scales", s.star_scales);
    auto kinds = p.value<std::vector<std::string>>("omega_kinds",
                                                   {"delta_norm_sq", "hessian_trace"});
    c.penalty.omega_kinds.clear();
    for (const auto& k : kinds) c.penalty.omega_kinds.push_back(omega_kind_from(k));
    auto scopes = p.value<std::vector<std::string>>("scopes", {"all"});
    c.penalty.scopes.clear();
    for (const auto& sc : scopes) c.penalty.scopes.push_back(sweep_scope_from(sc));
    p.finish();
  } else if (c.experiment == "rebalance") {
    auto p = root.child("params");
    c.rebalance.d = p.value<std::size_t>("d", c.rebalance.d);
    c.rebalance.insertions = p.value<std::size_t>("insertions", c.rebalance.insertions);
    c.rebalance.cond_max = p.value<double>("cond_max", c.rebalance.cond_max);
    p.finish();
  } else if (c.experiment == "reverse") {
    auto p = root.child("params");
    c.reverse.corpus = p.require<std::string>("corpus");
    c.reverse.locked_model = p.require<std::string>("locked_model");
    c.reverse.reverse.d_ff = p.value<std::size_t>("d_ff", c.reverse.reverse.d_ff);
    if (p.has_child("collect"))
      cfg_detail::parse_collect(p.child("collect"), c.reverse.reverse.collect);
    if (p.has_child("train")) cfg_detail::parse_phase1(p.child("train"), c.reverse.reverse.train);
    p.finish();
  } else if (c.experiment == "memory") {
    auto p = root.child("params");
    c.memory.element_width = p.value<std::size_t>("element_width", c.memory.element_width);
    auto arr = p.require<nlohmann::json>("cells");
    if (!arr.is_array()) throw ConfigError("memory.cells must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      StrictObject co(arr[i], "memory.cells[" + std::to_string(i) + "]");
      MemoryCell cell;
      cell.d = co.require<std::size_t>("d");
      cell.r = co.require<std::size_t>("r");
      cell.depth = co.require<std::size_t>("L");
      cell.d_ff = co.value<std::size_t>("d_ff", 0);
      cell.measure = co.value<bool>("measure", true);
      co.finish();
      c.memory.cells.push_back(cell);
    }
    p.finish();
  } else if (c.experiment == "kappa") {
    auto p = root.child("params");
    c.kappa.mode = p.value<std::string>("mode", "bound");
    if (c.kappa.mode == "bound") {
      auto arr = p.require<nlohmann::json>("cells");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        StrictObject co(arr[i], "kappa.cells[" + std::to_string(i) + "]");
        KappaExperiment::Cell cell;
        cell.d = co.require<double>("d");
        cell.r = co.value<double>("r", 0.0);
        cell.depth = co.require<double>("L");
        cell.d_ff = co.require<double>("d_ff");
        cell.a_attn = co.value<double>("a_attn", 0.0);
        co.finish();
        c.kappa.cells.push_back(cell);
      }
    } else if (c.kappa.mode == "empirical") {
      c.kappa.baseline_csv = p.require<std::string>("baseline_csv");
      c.kappa.locked_csv = p.require<std::string>("locked_csv");
      c.kappa.target_loss = p.require<double>("target_loss");
    } else {
      throw ConfigError("kappa.mode must be 'bound' or 'empirical'");
    }
    p.finish();
  } else if (c.experiment == "condition") {
    auto p = root.child("params");
    c.condition.pairs = p.value<std::size_t>("pairs", c.condition.pairs);
    c.condition.dims = p.value<std::vector<std::size_t>>("dims", c.condition.dims);
    c.condition.a_values = p.value<std::vector<double>>("a_values", c.condition.a_values);
    c.condition.eps = p.value<double>("eps", c.condition.eps);
    p.finish();
  } else if (c.experiment == "hutchinson") {
    auto p = root.child("params");
    c.hutchinson.problem = p.value<std::string>("problem", c.hutchinson.problem);
    c.hutchinson.diag = p.value<std::vector<double>>("diag", c.hutchinson.diag);
    c.hutchinson.d = p.value<std::size_t>("d", c.hutchinson.d);
    c.hutchinson.a = p.value<double>("a", c.hutchinson.a);
    c.hutchinson.probes = p.value<std::size_t>("probes", c.hutchinson.probes);
    p.finish();
  } else if (c.experiment == "matfac") {
    auto p = root.child("params");
    auto& m = c.matfac;
    m.d = p.value<std::size_t>("d", m.d);
    m.a = p.value<double>("a", m.a);
    m.sgd_lrs = p.value<std::vector<double>>("sgd_lrs", m.sgd_lrs);
    m.adam_lrs = p.value<std::vector<double>>("adam_lrs", m.adam_lrs);
    m.sgd_steps = p.value<std::size_t>("sgd_steps", m.sgd_steps);
    m.adam_steps = p.value<std::size_t>("adam_steps", m.adam_steps);
    m.seeds = p.value<std::size_t>("seeds", m.seeds);
    m.threshold_frac = p.value<double>("threshold_frac", m.threshold_frac);
    m.stop_frac = p.value<double>("stop_frac", m.stop_frac);
    m.record_every = p.value<std::size_t>("record_every", m.record_every);
    p.finish();
  } else if (c.experiment == "bench") {
    auto p = root.child("params");
    c.bench.corpus = p.require<std::string>("corpus");
    c.bench.baseline_model = p.require<std::string>("baseline_model");
    c.bench.locked_model = p.require<std::string>("locked_model");
    c.bench.steps = p.value<std::size_t>("steps", c.bench.steps);
    c.bench.warmup = p.value<std::size_t>("warmup", c.bench.warmup);
    c.bench.batch = p.value<std::size_t>("batch", c.bench.batch);
    c.bench.seq_len = p.value<std::size_t>("seq_len", c.bench.seq_len);
    c.bench.locked_checkpoint_interval =
        p.value<std::size_t>("locked_checkpoint_interval", c.bench.locked_checkpoint_interval);
    p.finish();
  } else if (c.experiment == "eval") {
    auto p = root.child("params");
    c.eval.corpus = p.require<std::string>("corpus");
    c.eval.model = p.require<std::string>("model");
    c.eval.seq_len = p.value<std::size_t>("seq_len", c.eval.seq_len);
    p.finish();
  } else {
    throw ConfigError("unknown experiment kind '" + c.experiment + "'");
  }
  root.finish();
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

// Canonical serialization (used by the round-trip contract).
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["jobs"] = c.jobs;
  nlohmann::json p;
  if (c.experiment == "lock") {
    p["corpus"] = c.lock.corpus;
    p["save_locked"] = c.lock.save_locked;
    p["rank"] = c.lock.lock.rank;
    p["teacher"] = {{"checkpoint", c.lock.teacher.checkpoint},
                    {"train",
                     {{"steps", c.lock.teacher.train.steps},
                      {"lr", c.lock.teacher.train.lr},
                      {"batch", c.lock.teacher.train.batch},
                      {"seq_len", c.lock.teacher.train.seq_len},
                      {"weight_decay", c.lock.teacher.train.weight_decay},
                      {"clip_norm", c.lock.teacher.train.clip_norm},
                      {"warmup_frac", c.lock.teacher.train.warmup_frac},
                      {"record_every", c.lock.teacher.train.record_every}}},
                    {"arch",
                     {{"vocab", c.lock.teacher.arch.vocab},
                      {"d", c.lock.teacher.arch.d},
                      {"n_layers", c.lock.teacher.arch.n_layers},
                      {"heads", c.lock.teacher.arch.heads},
                      {"d_ff", c.lock.teacher.arch.d_ff},
                      {"n_max", c.lock.teacher.arch.n_max}}}};
    p["collect"] = {{"n_tokens", c.lock.lock.collect.n_tokens},
                    {"seq_len", c.lock.lock.collect.seq_len}};
    p["phase1"] = {{"steps", c.lock.lock.phase1.steps},
                   {"lr", c.lock.lock.phase1.lr},
                   {"batch", c.lock.lock.phase1.batch},
                   {"weight_decay", c.lock.lock.phase1.weight_decay},
                   {"clip_norm", c.lock.lock.phase1.clip_norm},
                   {"warmup_frac", c.lock.lock.phase1.warmup_frac},
                   {"record_every", c.lock.lock.phase1.record_every}};
    p["phase2"] = {{"steps", c.lock.lock.phase2.steps},
                   {"lr", c.lock.lock.phase2.lr},
                   {"batch", c.lock.lock.phase2.batch},
                   {"seq_len", c.lock.lock.phase2.seq_len},
                   {"top_k", c.lock.lock.phase2.top_k},
                   {"weight_decay", c.lock.lock.phase2.weight_decay},
                   {"clip_norm", c.lock.lock.phase2.clip_norm},
                   {"warmup_frac", c.lock.lock.phase2.warmup_frac},
                   {"record_every", c.lock.lock.phase2.record_every}};
  } else if (c.experiment == "finetune") {
    p["corpus"] = c.finetune.corpus;
    p["locked_model"] = c.finetune.locked_model;
    p["baseline_model"] = c.finetune.baseline_model;
    p["lrs"] = c.finetune.lrs;
    p["steps"] = c.finetune.steps;
    p["batch"] = c.finetune.batch;
    p["seq_len"] = c.finetune.seq_len;
    p["checkpoint_interval"] = c.finetune.checkpoint_interval;
    p["element_budget"] = c.finetune.element_budget;
    p["target_loss_drop"] = c.finetune.target_loss_drop;
  } else if (c.experiment == "partial") {
    p["corpus"] = c.partial.corpus;
    p["locked_model"] = c.partial.locked_model;
    p["modes"] = c.partial.modes;
    p["lr"] = c.partial.lr;
    p["steps"] = c.partial.steps;
    p["batch"] = c.partial.batch;
    p["seq_len"] = c.partial.seq_len;
  } else if (c.experiment == "lora") {
    p["corpus"] = c.lora.corpus;
    p["locked_model"] = c.lora.locked_model;
    p["targets"] = c.lora.targets;
    p["rank"] = c.lora.rank;
    p["lr"] = c.lora.lr;
    p["steps"] = c.lora.steps;
  } else if (c.experiment == "reverse") {
    p["corpus"] = c.reverse.corpus;
    p["locked_model"] = c.reverse.locked_model;
    p["d_ff"] = c.reverse.reverse.d_ff;
    p["collect"] = {{"n_tokens", c.reverse.reverse.collect.n_tokens},
                    {"seq_len", c.reverse.reverse.collect.seq_len}};
    p["train"] = {{"steps", c.reverse.reverse.train.steps},
                  {"lr", c.reverse.reverse.train.lr},
                  {"batch", c.reverse.reverse.train.batch},
                  {"weight_decay", c.reverse.reverse.train.weight_decay},
                  {"clip_norm", c.reverse.reverse.train.clip_norm},
                  {"warmup_frac", c.reverse.reverse.train.warmup_frac},
                  {"record_every", c.reverse.reverse.train.record_every}};
  } else if (c.experiment == "memory") {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : c.memory.cells)
      cells.push_back({{"d", cell.d},
                       {"r", cell.r},
                       {"L", cell.depth},
                       {"d_ff", cell.d_ff},
                       {"measure", cell.measure}});
    p["cells"] = cells;
    p["element_width"] = c.memory.element_width;
  } else if (c.experiment == "kappa") {
    p["mode"] = c.kappa.mode;
    if (c.kappa.mode == "bound") {
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& cell : c.kappa.cells)
        cells.push_back({{"d", cell.d},
                         {"r", cell.r},
                         {"L", cell.depth},
                         {"d_ff", cell.d_ff},
                         {"a_attn", cell.a_attn}});
      p["cells"] = cells;
    } else {
      p["baseline_csv"] = c.kappa.baseline_csv;
      p["locked_csv"] = c.kappa.locked_csv;
      p["target_loss"] = c.kappa.target_loss;
    }
  } else if (c.experiment == "bench") {
    p["corpus"] = c.bench.corpus;
    p["baseline_model"] = c.bench.baseline_model;
    p["locked_model"] = c.bench.locked_model;
    p["steps"] = c.bench.steps;
    p["warmup"] = c.bench.warmup;
    p["batch"] = c.bench.batch;
    p["seq_len"] = c.bench.seq_len;
    p["locked_checkpoint_interval"] = c.bench.locked_checkpoint_interval;
  } else if (c.experiment == "eval") {
    p["corpus"] = c.eval.corpus;
    p["model"] = c.eval.model;
    p["seq_len"] = c.eval.seq_len;
  } else if (c.experiment == "penalty") {
    const auto& s = c.penalty.sweep;
    p["lambda_count"] = s.lambda_count;
    p["lambda_min"] = s.lambda_min;
    p["lambda_max"] = s.lambda_max;
    p["lrs"] = s.lrs;
    p["steps"] = s.steps;
    p["batch"] = s.batch;
    p["probes"] = s.probes;
    p["clip_norm"] = s.clip_norm;
    p["seeds"] = s.seeds;
    p["eval_samples"] = s.eval_samples;
    p["record_every"] = s.record_every;
    p["input_dim"] = s.input_dim;
    p["hidden"] = s.hidden;
    p["classes"] = s.classes;
    p["train_samples"] = s.train_samples;
    p["base_steps"] = s.base_steps;
    p["base_lr"] = s.base_lr;
    p["base_batch"] = s.base_batch;
    p["mnist_images"] = s.mnist_images;
    p["mnist_labels"] = s.mnist_labels;
    p["star_scales"] = s.star_scales;
    std::vector<std::string> kinds, scopes;
    for (auto k : c.penalty.omega_kinds) kinds.push_back(omega_kind_name(k));
    for (auto sc : c.penalty.scopes) scopes.push_back(sweep_scope_name(sc));
    p["omega_kinds"] = kinds;
    p["scopes"] = scopes;
  } else if (c.experiment == "matfac") {
    const auto& m = c.matfac;
    p["d"] = m.d;
    p["a"] = m.a;
    p["sgd_lrs"] = m.sgd_lrs;
    p["adam_lrs"] = m.adam_lrs;
    p["sgd_steps"] = m.sgd_steps;
    p["adam_steps"] = m.adam_steps;
    p["seeds"] = m.seeds;
    p["threshold_frac"] = m.threshold_frac;
    p["stop_frac"] = m.stop_frac;
    p["record_every"] = m.record_every;
  } else if (c.experiment == "condition") {
    p["pairs"] = c.condition.pairs;
    p["dims"] = c.condition.dims;
    p["a_values"] = c.condition.a_values;
    p["eps"] = c.condition.eps;
  } else if (c.experiment == "hutchinson") {
    p["problem"] = c.hutchinson.problem;
    p["diag"] = c.hutchinson.diag;
    p["d"] = c.hutchinson.d;
    p["a"] = c.hutchinson.a;
    p["probes"] = c.hutchinson.probes;
  } else if (c.experiment == "rebalance") {
    p["d"] = c.rebalance.d;
    p["insertions"] = c.rebalance.insertions;
    p["cond_max"] = c.rebalance.cond_max;
  }
  j["params"] = p;
  return j;
}

}  // namespace dlrlock
