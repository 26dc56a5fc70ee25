#pragma once

// Commands of the `lopt` tool. Each takes a Config (from a file and/or
// flags), writes its outputs atomically and returns a process exit code.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lopt/baselines.hpp"
#include "lopt/config.hpp"
#include "lopt/evaluate.hpp"
#include "lopt/meta.hpp"

namespace lopt {

enum ExitCode : int { kExitCompleted = 0, kExitError = 1, kExitConverged = 3, kExitDiverged = 4 };

struct KeyDoc {
  std::string key;
  std::string help;
  bool repeated = false;
};

struct CommandDoc {
  std::string name;
  std::string help;
  std::vector<KeyDoc> keys;
};

const std::vector<CommandDoc>& command_docs();
const CommandDoc& command_doc(const std::string& name);
std::vector<std::string> known_keys(const std::string& command);

/// "default", or switches joined by '+': no_attention, no_multi_timescale,
/// no_dynamic_input_scaling, no_relative_lr, no_shortcut, no_trainable_init,
/// param_noise, prev_timescale, unnormalized_step, linear_objective.
void apply_flagset(const std::string& flagset, Architecture& arch, MetaObjective& objective);

Architecture architecture_from(const Config& config);
MetaTrainConfig meta_train_config_from(const Config& config);

/// The `problem.*` keys, or family "mlp" with the `mlp.*` and `mnist.*` keys.
ProblemPtr problem_from_config(const Config& config);

struct OptimizerChoice {
  std::optional<MetaParams> learned;  // set for the learned optimizer
  BaselineConfig baseline;
};
OptimizerChoice optimizer_from_config(const Config& config);
/// For the learned optimizer `lr` fixes the initial learning rate.
Curve run_choice(const OptimizerChoice& choice, const Problem& problem, RunSettings settings,
                 std::optional<double> lr = std::nullopt);

struct MetaTrainJob {
  MetaTrainConfig config;
  Architecture arch;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::int64_t checkpoint_every = 0;  // 0: only at completion
  bool resume = false;
};
MetaTrainJob meta_train_job_from(const Config& config);
/// Progress lines go to `progress` when given.
MetaTrainState run_meta_train_job(const MetaTrainJob& job, std::ostream* progress = nullptr);

struct AblationRow {
  std::string flagset;
  std::string problem;
  double median_log10_final_loss = 0.0;
  int runs = 0;
};
struct AblationJob {
  std::vector<std::string> flagsets;
  MetaTrainConfig config;  // shared budget
  Architecture arch;       // before flag-set switches
  std::vector<ProblemSpec> problems;
  int eval_seeds = 3;
  std::int64_t eval_steps = 1000;
  std::filesystem::path checkpoint_dir;  // empty: nothing saved or loaded
};
std::vector<AblationRow> run_ablation(const AblationJob& job, std::ostream* progress = nullptr);

struct BenchRow {
  std::int64_t batch = 0;
  double grad_ms = 0.0;     // loss and gradient only
  double learned_ms = 0.0;  // full learned-optimizer step
  double adam_ms = 0.0;     // full adam step

  double optimizer_ms() const { return learned_ms - grad_ms; }
  double ratio() const { return learned_ms / adam_ms; }
};
/// Medians over `reps` timed repetitions after `warmup`; batch sizes are
/// measured interleaved so drift affects all of them alike.
std::vector<BenchRow> bench_overhead(const MetaParams& meta, const MlpConfig& base, std::span<const std::int64_t> batches,
                                     int reps, int warmup);

int cmd_meta_train(const Config& config, std::ostream& out);
int cmd_train(const Config& config, std::ostream& out);
int cmd_lr_sweep(const Config& config, std::ostream& out);
int cmd_ablate(const Config& config, std::ostream& out);
int cmd_bench_overhead(const Config& config, std::ostream& out);

/// Dispatches by name; unknown keys, missing values and failures are reported
/// to `err` and give kExitError.
int run_command(const std::string& name, const Config& config, std::ostream& out, std::ostream& err);

}  // namespace lopt
