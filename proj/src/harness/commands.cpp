#include "lopt/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "lopt/checkpoint.hpp"
#include "lopt/idx.hpp"
#include "lopt/io.hpp"
#include "lopt/random.hpp"

namespace lopt {

namespace {

std::vector<KeyDoc> problem_docs() {
  return {
      {"problem.family", "problem family, or mlp for the fully connected classifier"},
      {"problem.dim", "dimension (0: drawn from the family's range)"},
      {"problem.seed", "instance seed"},
      {"problem.transform", "sparse [keep], rescale, power [p] or multi_task <families...>; quote values with spaces", true},
      {"problem.minibatch", "minibatch size in [10, 200] (0: family default)"},
      {"problem.noise_std", "gradient noise std in [0.1, 2] (0: drawn)"},
      {"problem.num_examples", "dataset size (0: family default)"},
      {"problem.separable", "logistic regression: 1 separable, 0 not, -1 drawn"},
      {"mlp.inputs", "mlp: input features of synthetic data"},
      {"mlp.hidden", "mlp: hidden units"},
      {"mlp.classes", "mlp: classes"},
      {"mlp.examples", "mlp: synthetic examples"},
      {"mlp.minibatch", "mlp: minibatch size"},
      {"mnist.images", "mlp: IDX image file (replaces synthetic data)"},
      {"mnist.labels", "mlp: IDX label file"},
  };
}

std::vector<KeyDoc> optimizer_docs(bool with_lr) {
  std::vector<KeyDoc> d = {
      {"optimizer", "learned, adam, rmsprop or sgd_momentum"},
      {"checkpoint", "learned: checkpoint file"},
      {"beta1", "adam first-moment decay"},
      {"beta2", "adam second-moment decay"},
      {"decay", "rmsprop mean-square decay"},
      {"momentum", "sgd momentum"},
      {"epsilon", "baseline epsilon"},
  };
  if (with_lr) {
    d.push_back({"lr", "baseline learning rate"});
    d.push_back({"init_lr", "learned: initial learning rate (default: drawn)"});
  }
  return d;
}

std::vector<KeyDoc> arch_docs() {
  return {
      {"k_param", "parameter cell hidden units"},
      {"k_tensor", "tensor cell hidden units"},
      {"k_global", "global cell hidden units"},
      {"timescales", "averaging timescales"},
  };
}

std::vector<KeyDoc> meta_docs() {
  return {
      {"corpus", "problem families to train on (default: all)", true},
      {"workers", "parallel workers"},
      {"iterations", "meta-iterations"},
      {"mode", "sync or async"},
      {"seed", "run seed"},
      {"meta_lr", "meta RMSProp learning rate"},
      {"meta_decay", "meta RMSProp decay"},
      {"eps", "meta-objective epsilon"},
      {"second_order", "differentiate through gradients (0: first-order diagnostic)"},
      {"schedule.scale_unrolls", "exponential scale of the unroll count"},
      {"schedule.offset_unrolls", "offset of the unroll count"},
      {"schedule.scale_steps", "exponential scale of steps per unroll"},
      {"schedule.offset_steps", "offset of steps per unroll"},
      {"moving_average", "decay of the logged moving average"},
      {"timing", "record wall-clock times (makes logs non-reproducible)"},
  };
}

std::vector<KeyDoc> join(std::initializer_list<std::vector<KeyDoc>> parts) {
  std::vector<KeyDoc> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<CommandDoc> build_docs() {
  std::vector<CommandDoc> docs;
  docs.push_back({"meta-train", "meta-train a learned optimizer",
                  join({arch_docs(), meta_docs(),
                        {{"flags", "feature flag-set, e.g. default or no_attention+no_shortcut"},
                         {"output", "checkpoint path"},
                         {"log", "meta-log CSV path (default: <output>.log.csv)"},
                         {"checkpoint_every", "save every N iterations (0: at completion)"},
                         {"resume", "continue from the checkpoint at output"}}})});
  docs.push_back({"train", "run one optimization and write its curve",
                  join({problem_docs(), optimizer_docs(true),
                        {{"steps", "optimization steps"},
                         {"seed", "run seed (initial point, batches, learned state)"},
                         {"timing", "record wall_ms (makes output non-reproducible)"},
                         {"converge_tol", "converged when final loss <= known minimum + tol"},
                         {"output", "curve CSV path"}}})});
  docs.push_back({"lr-sweep", "final loss per learning rate",
                  join({problem_docs(), optimizer_docs(false),
                        {{"lrs", "learning rates (initial rates for learned)", true},
                         {"steps", "optimization steps"},
                         {"seed", "run seed"},
                         {"output", "summary CSV path"}}})});
  docs.push_back({"ablate", "meta-train one optimizer per flag-set and compare them",
                  join({arch_docs(), meta_docs(),
                        {{"flagsets", "flag-sets to compare", true},
                         {"eval", "evaluation problem families", true},
                         {"eval_seeds", "runs per evaluation problem"},
                         {"eval_steps", "steps per evaluation run"},
                         {"checkpoint_dir", "load or store one checkpoint per flag-set"},
                         {"output", "comparison CSV path"}}})});
  docs.push_back({"bench-overhead", "time optimizer steps across minibatch sizes",
                  join({arch_docs(),
                        {{"batches", "minibatch sizes", true},
                         {"reps", "timed repetitions (at least 30)"},
                         {"warmup", "untimed repetitions"},
                         {"checkpoint", "learned checkpoint (default: fresh initialization)"},
                         {"mlp.inputs", "input features"},
                         {"mlp.hidden", "hidden units"},
                         {"mlp.classes", "classes"},
                         {"seed", "seed"},
                         {"output", "timing CSV path"}}})});
  return docs;
}

std::vector<std::string> words(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const std::string& v : values) {
    std::istringstream in(v);
    for (std::string w; in >> w;) out.push_back(w);
  }
  return out;
}

std::string required(const Config& c, const std::string& key) {
  const auto v = c.get(key);
  if (!v || v->empty()) throw ConfigError("missing required key '" + key + "'");
  return *v;
}

std::vector<Family> families_from(const Config& c, const std::string& key) {
  std::vector<Family> out;
  try {
    for (const std::string& w : words(c.list(key))) out.push_back(parse_family(w));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return out;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kCompleted: return "completed";
    case RunStatus::kConverged: return "converged";
    case RunStatus::kDiverged: return "diverged";
  }
  return "unknown";
}

}  // namespace

const std::vector<CommandDoc>& command_docs() {
  static const std::vector<CommandDoc> docs = build_docs();
  return docs;
}

const CommandDoc& command_doc(const std::string& name) {
  for (const CommandDoc& d : command_docs()) {
    if (d.name == name) return d;
  }
  std::string known;
  for (const CommandDoc& d : command_docs()) known += (known.empty() ? "" : ", ") + d.name;
  throw ConfigError("unknown command '" + name + "'; known commands: " + known);
}

std::vector<std::string> known_keys(const std::string& command) {
  std::vector<std::string> keys;
  for (const KeyDoc& k : command_doc(command).keys) keys.push_back(k.key);
  return keys;
}

void apply_flagset(const std::string& flagset, Architecture& arch, MetaObjective& objective) {
  if (flagset.empty()) throw ConfigError("empty flag-set");
  std::size_t start = 0;
  while (start <= flagset.size()) {
    const std::size_t end = std::min(flagset.find('+', start), flagset.size());
    const std::string s = flagset.substr(start, end - start);
    FeatureFlags& f = arch.flags;
    if (s == "default") {
    } else if (s == "no_attention") {
      f.attention = false;
    } else if (s == "no_multi_timescale") {
      f.multi_timescale = false;
    } else if (s == "no_dynamic_input_scaling") {
      f.dynamic_input_scaling = false;
    } else if (s == "no_relative_lr") {
      f.relative_lr = false;
    } else if (s == "no_shortcut") {
      f.shortcut = false;
    } else if (s == "no_trainable_init") {
      f.trainable_init = false;
    } else if (s == "param_noise") {
      f.param_noise = true;
    } else if (s == "prev_timescale") {
      f.prev_timescale = true;
    } else if (s == "unnormalized_step") {
      f.unnormalized_step = true;
    } else if (s == "linear_objective") {
      objective = MetaObjective::kLinear;
    } else {
      throw ConfigError("unknown flag '" + s +
                        "' (known: default, no_attention, no_multi_timescale, no_dynamic_input_scaling, "
                        "no_relative_lr, no_shortcut, no_trainable_init, param_noise, prev_timescale, "
                        "unnormalized_step, linear_objective)");
    }
    start = end + 1;
  }
}

Architecture architecture_from(const Config& c) {
  Architecture arch;
  arch.k_param = static_cast<int>(c.integer("k_param", arch.k_param));
  arch.k_tensor = static_cast<int>(c.integer("k_tensor", arch.k_tensor));
  arch.k_global = static_cast<int>(c.integer("k_global", arch.k_global));
  arch.flags.timescales = static_cast<int>(c.integer("timescales", arch.flags.timescales));
  if (arch.k_param < 1 || arch.k_tensor < 1 || arch.k_global < 1 || arch.flags.timescales < 1) {
    throw ConfigError("hidden sizes and timescales must be positive");
  }
  return arch;
}

MetaTrainConfig meta_train_config_from(const Config& c) {
  MetaTrainConfig m;
  m.families = families_from(c, "corpus");
  if (m.families.empty()) m.families = all_families();
  m.workers = static_cast<int>(c.integer("workers", 1));
  m.iterations = c.integer("iterations", 0);
  const std::string mode = c.get_or("mode", "sync");
  if (mode == "sync") {
    m.mode = WorkerMode::kSync;
  } else if (mode == "async") {
    m.mode = WorkerMode::kAsync;
  } else {
    throw ConfigError("mode must be sync or async, got '" + mode + "'");
  }
  m.seed = static_cast<std::uint64_t>(c.integer("seed", 0));
  m.meta_lr = c.number("meta_lr", m.meta_lr);
  m.meta_decay = c.number("meta_decay", m.meta_decay);
  m.unroll.eps = c.number("eps", m.unroll.eps);
  m.unroll.second_order = c.flag("second_order", true);
  m.schedule.scale_unrolls = c.number("schedule.scale_unrolls", m.schedule.scale_unrolls);
  m.schedule.offset_unrolls = c.number("schedule.offset_unrolls", m.schedule.offset_unrolls);
  m.schedule.scale_steps = c.number("schedule.scale_steps", m.schedule.scale_steps);
  m.schedule.offset_steps = c.number("schedule.offset_steps", m.schedule.offset_steps);
  m.moving_average = c.number("moving_average", m.moving_average);
  m.timing = c.flag("timing", false);
  if (m.workers < 1) throw ConfigError("workers must be at least 1");
  if (m.iterations < 0) throw ConfigError("iterations must be non-negative");
  if (!(m.meta_lr > 0.0)) throw ConfigError("meta_lr must be positive");
  return m;
}

ProblemPtr problem_from_config(const Config& c) {
  if (c.get_or("problem.family", "") != "mlp") {
    try {
      return instantiate(problem_spec_from_config(c));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  MlpConfig m;
  m.inputs = c.integer("mlp.inputs", m.inputs);
  m.hidden = c.integer("mlp.hidden", m.hidden);
  m.classes = c.integer("mlp.classes", m.classes);
  m.num_examples = c.integer("mlp.examples", m.num_examples);
  m.minibatch = c.integer("mlp.minibatch", m.minibatch);
  m.seed = static_cast<std::uint64_t>(c.integer("problem.seed", 0));
  const auto images = c.get("mnist.images");
  const auto labels = c.get("mnist.labels");
  if (images.has_value() != labels.has_value()) throw ConfigError("mnist.images and mnist.labels go together");
  if (!images) return make_mlp_problem(m);
  NdArray x = idx_images(load_idx(*images));
  std::vector<int> y = idx_labels(load_idx(*labels));
  if (static_cast<std::size_t>(x.shape()[0]) != y.size()) {
    throw ConfigError("mnist: " + std::to_string(x.shape()[0]) + " images but " + std::to_string(y.size()) + " labels");
  }
  m.inputs = x.shape()[1];
  m.classes = 10;
  m.num_examples = x.shape()[0];
  return make_mlp_problem(m, std::move(x), std::move(y));
}

OptimizerChoice optimizer_from_config(const Config& c) {
  OptimizerChoice choice;
  const std::string name = required(c, "optimizer");
  if (name == "learned") {
    choice.learned = load_checkpoint(required(c, "checkpoint"));
    return choice;
  }
  BaselineKind kind;
  try {
    kind = parse_baseline(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(e.what()) + ", learned");
  }
  BaselineConfig b = BaselineConfig::defaults(kind, c.number("lr", 1e-3));
  b.beta1 = c.number("beta1", b.beta1);
  b.beta2 = c.number("beta2", b.beta2);
  b.decay = c.number("decay", b.decay);
  b.momentum = c.number("momentum", b.momentum);
  b.epsilon = c.number("epsilon", b.epsilon);
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  choice.baseline = b;
  return choice;
}

Curve run_choice(const OptimizerChoice& choice, const Problem& problem, RunSettings settings, std::optional<double> lr) {
  if (choice.learned) {
    if (lr) settings.init_lr = lr;
    return run_learned(*choice.learned, problem, settings);
  }
  BaselineConfig b = choice.baseline;
  if (lr) b.learning_rate = *lr;
  return run_baseline_curve(b, problem, settings);
}

MetaTrainJob meta_train_job_from(const Config& c) {
  MetaTrainJob job;
  job.config = meta_train_config_from(c);
  job.arch = architecture_from(c);
  apply_flagset(c.get_or("flags", "default"), job.arch, job.config.unroll.objective);
  job.checkpoint = required(c, "output");
  job.log = c.get_or("log", job.checkpoint.string() + ".log.csv");
  job.checkpoint_every = c.integer("checkpoint_every", 0);
  job.resume = c.flag("resume", false);
  if (job.config.iterations < 1) throw ConfigError("iterations must be at least 1");
  return job;
}

MetaTrainState run_meta_train_job(const MetaTrainJob& job, std::ostream* progress) {
  check_writable(job.checkpoint);
  check_writable(job.log);
  MetaTrainState state;
  CsvTable log({"meta_iteration", "problem", "meta_loss", "moving_avg_meta_loss", "wall_ms", "diverged"});
  if (job.resume) {
    state = load_training(job.checkpoint);
    if (!(state.meta.arch == job.arch)) throw ConfigError("resume: checkpoint architecture differs from the config");
    if (std::filesystem::exists(job.log)) {
      const CsvData old = parse_csv(read_file(job.log));
      if (old.header != log.header()) throw ConfigError("resume: unexpected log header in " + job.log.string());
      for (const auto& r : old.rows) {
        if (parse_integer(r[0], "meta_iteration") >= state.iteration) continue;
        log.row();
        for (const std::string& f : r) log.add(std::string_view(f));
      }
    }
  } else {
    state = start_meta_training(job.config, job.arch);
  }
  const std::int64_t report = std::max<std::int64_t>(1, job.config.iterations / 100);
  auto save = [&](const MetaTrainState& s) {
    save_training(job.checkpoint, s);
    log.save(job.log);
  };
  meta_train(
      state, job.config,
      [&](const MetaLogRow& r) {
        log.row()
            .add(r.meta_iteration)
            .add(std::string_view(r.problem_name))
            .add(r.meta_loss)
            .add(r.moving_avg_meta_loss)
            .add(r.wall_ms)
            .add(r.diverged ? 1 : 0);
      },
      [&](const MetaTrainState& s) {
        if (job.checkpoint_every > 0 && s.iteration % job.checkpoint_every == 0) save(s);
        if (progress && s.iteration % report == 0) {
          *progress << "iteration " << s.iteration << "/" << job.config.iterations << " moving_avg_meta_loss "
                    << format_double(s.moving_avg) << std::endl;
        }
      });
  save(state);
  return state;
}

std::vector<AblationRow> run_ablation(const AblationJob& job, std::ostream* progress) {
  if (job.flagsets.empty()) throw ConfigError("ablate: no flag-sets");
  if (job.problems.empty()) throw ConfigError("ablate: no evaluation problems");
  if (job.eval_seeds < 1) throw ConfigError("ablate: eval_seeds must be at least 1");
  std::vector<ProblemPtr> problems;
  for (const ProblemSpec& s : job.problems) problems.push_back(instantiate(s));
  std::vector<AblationRow> rows;
  for (const std::string& flagset : job.flagsets) {
    MetaTrainJob mt;
    mt.config = job.config;
    mt.arch = job.arch;
    apply_flagset(flagset, mt.arch, mt.config.unroll.objective);
    MetaParams meta;
    const bool stored = !job.checkpoint_dir.empty();
    const auto path = job.checkpoint_dir / (flagset + ".lopt");
    if (stored && std::filesystem::exists(path)) {
      meta = load_checkpoint(path);
      if (!(meta.arch == mt.arch)) throw ConfigError(path.string() + ": architecture does not match flag-set " + flagset);
      if (progress) *progress << flagset << ": loaded " << path.string() << std::endl;
    } else {
      if (progress) *progress << flagset << ": meta-training " << mt.config.iterations << " iterations" << std::endl;
      MetaTrainState s = start_meta_training(mt.config, mt.arch);
      meta_train(s, mt.config, {});
      meta = std::move(s.meta);
      if (stored) {
        std::filesystem::create_directories(job.checkpoint_dir);
        save_checkpoint(path, meta);
      }
    }
    for (std::size_t p = 0; p < problems.size(); ++p) {
      std::vector<double> finals;
      for (int r = 0; r < job.eval_seeds; ++r) {
        RunSettings settings;
        settings.steps = job.eval_steps;
        settings.seed = derive_seed(job.config.seed, {0xab1a, p, static_cast<std::uint64_t>(r)});
        finals.push_back(std::log10(run_learned(meta, *problems[p], settings).final_loss()));
      }
      rows.push_back({flagset, problems[p]->name(), median(finals), job.eval_seeds});
    }
  }
  return rows;
}

std::vector<BenchRow> bench_overhead(const MetaParams& meta, const MlpConfig& base, std::span<const std::int64_t> batches,
                                     int reps, int warmup) {
  if (batches.empty()) throw ConfigError("bench-overhead: no batch sizes");
  if (reps < 1 || warmup < 0) throw ConfigError("bench-overhead: reps must be positive");
  struct Case {
    ProblemPtr problem;
    Batch batch;
    std::vector<NdArray> theta;
    LearnedOptimizer learned;
    BaselineSlots slots;
    std::vector<double> grad, step, adam;
  };
  std::vector<Case> cases;
  for (std::int64_t b : batches) {
    MlpConfig m = base;
    m.minibatch = b;
    m.num_examples = std::max(m.num_examples, b);
    ProblemPtr problem = make_mlp_problem(m);
    std::vector<NdArray> theta = initial_params(*problem, m.seed);
    OptimizerState state = init_state(meta, theta, {.seed = m.seed, .init_lr = 1e-3});
    Batch batch = problem->sample_batch(derive_seed(m.seed, {0xbe, static_cast<std::uint64_t>(b)}));
    BaselineSlots slots = init_slots(theta);
    cases.push_back({problem, std::move(batch), std::move(theta), LearnedOptimizer(meta, std::move(state)),
                     std::move(slots), {}, {}, {}});
  }
  const BaselineConfig adam = BaselineConfig::defaults(BaselineKind::kAdam, 1e-6);
  auto gradient_of = [](Case& c) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const NdArray& p : c.theta) vars.push_back(tape.variable(p));
    return gradient_values(c.problem->loss(tape, vars, &c.batch), vars);
  };
  for (int r = 0; r < warmup + reps; ++r) {
    for (Case& c : cases) {
      auto t0 = std::chrono::steady_clock::now();
      const std::vector<NdArray> g = gradient_of(c);
      const double grad_ms = ms_since(t0);
      t0 = std::chrono::steady_clock::now();
      c.learned.step(*c.problem, &c.batch);
      const double step_ms = ms_since(t0);
      t0 = std::chrono::steady_clock::now();
      const std::vector<NdArray> ga = gradient_of(c);
      baseline_step(adam, c.slots, c.theta, ga);
      const double adam_ms = ms_since(t0);
      if (r < warmup) continue;
      c.grad.push_back(grad_ms);
      c.step.push_back(step_ms);
      c.adam.push_back(adam_ms);
    }
  }
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    rows.push_back({batches[i], median(cases[i].grad), median(cases[i].step), median(cases[i].adam)});
  }
  return rows;
}

int cmd_meta_train(const Config& c, std::ostream& out) {
  const MetaTrainJob job = meta_train_job_from(c);
  const MetaTrainState s = run_meta_train_job(job, &out);
  out << "wrote " << job.checkpoint.string() << " after " << s.iteration << " iterations" << std::endl;
  return kExitCompleted;
}

int cmd_train(const Config& c, std::ostream& out) {
  const std::filesystem::path output = required(c, "output");
  const OptimizerChoice choice = optimizer_from_config(c);
  const ProblemPtr problem = problem_from_config(c);
  RunSettings settings;
  settings.steps = c.integer("steps", 1000);
  settings.seed = static_cast<std::uint64_t>(c.integer("seed", 0));
  settings.timing = c.flag("timing", false);
  settings.converge_tol = c.number("converge_tol", settings.converge_tol);
  if (c.has("init_lr")) settings.init_lr = c.number("init_lr", 0.0);
  if (settings.steps < 1) throw ConfigError("steps must be at least 1");
  check_writable(output);
  const Curve curve = run_choice(choice, *problem, settings);
  curve_table(curve).save(output);
  out << problem->name() << ": " << status_name(curve.status) << " after " << curve.points.back().step
      << " steps, final loss " << format_double(curve.final_loss()) << std::endl;
  switch (curve.status) {
    case RunStatus::kConverged: return kExitConverged;
    case RunStatus::kDiverged: return kExitDiverged;
    case RunStatus::kCompleted: break;
  }
  return kExitCompleted;
}

int cmd_lr_sweep(const Config& c, std::ostream& out) {
  const std::filesystem::path output = required(c, "output");
  const std::vector<double> lrs = c.numbers("lrs");
  if (lrs.empty()) throw ConfigError("lrs must list at least one learning rate");
  for (double lr : lrs) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be positive");
  }
  const OptimizerChoice choice = optimizer_from_config(c);
  const ProblemPtr problem = problem_from_config(c);
  RunSettings settings;
  settings.steps = c.integer("steps", 1000);
  settings.seed = static_cast<std::uint64_t>(c.integer("seed", 0));
  if (settings.steps < 1) throw ConfigError("steps must be at least 1");
  check_writable(output);
  std::vector<double> finals;
  for (double lr : lrs) finals.push_back(run_choice(choice, *problem, settings, lr).final_loss());
  const std::size_t best = static_cast<std::size_t>(std::min_element(finals.begin(), finals.end()) - finals.begin());
  CsvTable t({"lr", "final_loss", "log10_final_loss", "diverged", "best"});
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t i = 0; i < lrs.size(); ++i) {
    const bool diverged = std::isinf(finals[i]);
    t.row().add(lrs[i]).add(finals[i]).add(std::log10(finals[i])).add(diverged ? 1 : 0).add(i == best ? 1 : 0);
    lo = std::min(lo, finals[i]);
    hi = std::max(hi, finals[i]);
  }
  t.save(output);
  const double lo_lr = *std::min_element(lrs.begin(), lrs.end());
  const double hi_lr = *std::max_element(lrs.begin(), lrs.end());
  const bool boundary = lrs.size() > 1 && (lrs[best] == lo_lr || lrs[best] == hi_lr);
  out << "best lr " << format_double(lrs[best]) << (boundary ? " (on the boundary of the sweep)" : "")
      << ", spread " << format_double(std::log10(hi / lo)) << " decades" << std::endl;
  return kExitCompleted;
}

int cmd_ablate(const Config& c, std::ostream& out) {
  const std::filesystem::path output = required(c, "output");
  AblationJob job;
  job.flagsets = words(c.list("flagsets"));
  job.config = meta_train_config_from(c);
  job.arch = architecture_from(c);
  const std::vector<Family> eval = families_from(c, "eval");
  for (std::size_t i = 0; i < eval.size(); ++i) {
    ProblemSpec s;
    s.family = eval[i];
    s.seed = derive_seed(job.config.seed, {0xe7a1, i});
    job.problems.push_back(s);
  }
  job.eval_seeds = static_cast<int>(c.integer("eval_seeds", 3));
  job.eval_steps = c.integer("eval_steps", 1000);
  job.checkpoint_dir = c.get_or("checkpoint_dir", "");
  if (job.config.iterations < 0) throw ConfigError("iterations must be non-negative");
  for (const std::string& f : job.flagsets) {
    Architecture a;
    MetaObjective o{};
    apply_flagset(f, a, o);
  }
  check_writable(output);
  CsvTable t({"flagset", "problem", "median_log10_final_loss", "runs"});
  for (const AblationRow& r : run_ablation(job, &out)) {
    t.row().add(std::string_view(r.flagset)).add(std::string_view(r.problem)).add(r.median_log10_final_loss).add(r.runs);
  }
  t.save(output);
  return kExitCompleted;
}

int cmd_bench_overhead(const Config& c, std::ostream& out) {
  const std::filesystem::path output = required(c, "output");
  std::vector<std::int64_t> batches;
  for (const std::string& w : words(c.list("batches"))) batches.push_back(parse_integer(w, "batches"));
  if (batches.empty()) throw ConfigError("batches must list at least one size");
  for (std::int64_t b : batches) {
    if (b < 1) throw ConfigError("batch sizes must be positive");
  }
  const int reps = static_cast<int>(c.integer("reps", 30));
  if (reps < 30) throw ConfigError("reps must be at least 30");
  const int warmup = static_cast<int>(c.integer("warmup", 5));
  MlpConfig m;
  m.inputs = c.integer("mlp.inputs", m.inputs);
  m.hidden = c.integer("mlp.hidden", m.hidden);
  m.classes = c.integer("mlp.classes", m.classes);
  m.seed = static_cast<std::uint64_t>(c.integer("seed", 0));
  const auto ckpt = c.get("checkpoint");
  const MetaParams meta = ckpt ? load_checkpoint(*ckpt) : MetaParams::initialize(architecture_from(c), m.seed);
  check_writable(output);
  CsvTable t({"batch", "grad_ms", "learned_ms", "adam_ms", "optimizer_ms", "learned_over_adam"});
  for (const BenchRow& r : bench_overhead(meta, m, batches, reps, warmup)) {
    t.row().add(r.batch).add(r.grad_ms).add(r.learned_ms).add(r.adam_ms).add(r.optimizer_ms()).add(r.ratio());
  }
  t.save(output);
  out << t.str();
  return kExitCompleted;
}

int run_command(const std::string& name, const Config& config, std::ostream& out, std::ostream& err) {
  try {
    const std::vector<std::string> known = known_keys(name);
    for (const std::string& key : config.keys()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ConfigError("unknown key '" + key + "' for " + name);
      }
    }
    if (name == "meta-train") return cmd_meta_train(config, out);
    if (name == "train") return cmd_train(config, out);
    if (name == "lr-sweep") return cmd_lr_sweep(config, out);
    if (name == "ablate") return cmd_ablate(config, out);
    return cmd_bench_overhead(config, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kExitError;
  }
}

}  // namespace lopt
