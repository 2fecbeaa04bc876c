#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "emcomm/agents.hpp"
#include "emcomm/environment.hpp"

namespace emcomm {

/// Communicating: learned senders. RandomMessages: each symbol uniform, only
/// the receiver learns. QLearning: no senders; the receiver sees the goal
/// one-hot in place of the message block.
enum class RunMode { Communicating, RandomMessages, QLearning };

std::string_view mode_name(RunMode mode);
RunMode parse_mode(std::string_view name);

struct ExperimentConfig {
  std::string layout = "empty_room";
  RunMode mode = RunMode::Communicating;
  int senders = 1;
  int vocab = 25;
  double gamma = 0.8;  // p_term = 1 - gamma
  double epsilon_sender = 0.1;
  double epsilon_receiver = 0.1;
  double lr_sender = 1e-3;
  double lr_receiver = 1e-3;
  int hidden = 64;
  double init_scale = 0.05;
  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;
  int batch_size = 10;
  std::uint64_t total_steps = 2'000'000;
  std::uint64_t metrics_every = 10'000;
  int metrics_window = 1000;
  int eval_episodes = 1000;
  std::uint64_t seed = 1;

  double p_term() const { return 1.0 - gamma; }
  /// Channel capacity N^M.
  std::uint64_t capacity() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& config);

/// The q_learning baseline always observes a 25-wide goal block from one source.
ExperimentConfig normalized(ExperimentConfig config);

/// All keys in canonical order with their textual values.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config);
/// `lr` and `epsilon` set both roles. Unknown keys and malformed values throw ConfigError.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string format_double(double value);

/// "key = value" lines in canonical order.
std::string canonical_text(const ExperimentConfig& config);
/// 16 hex digits identifying the full config, seed included.
std::string config_fingerprint(const ExperimentConfig& config);
/// Seed for a run: master seed mixed with the hyperparameter fingerprint.
std::uint64_t run_seed(const ExperimentConfig& config);

struct AgentSet {
  RunMode mode = RunMode::Communicating;
  std::string layout;
  int senders = 1;  // message blocks in the receiver observation
  int vocab = 2;
  std::vector<SenderAgent> sender_agents;  // empty unless Communicating
  ReceiverAgent receiver;
};

AgentSet make_agents(const ExperimentConfig& config, Rng& rng);

struct EpisodeOptions {
  bool train = false;
  /// scrambled[i]: sender i's symbol is replaced by a uniform draw for the episode.
  std::vector<bool> scrambled;
};

struct EpisodeOutcome {
  int episode_return = 0;
  int steps = 0;
  EpisodeState final_state;
};

/// One full episode. The environment stream drives goal placement and
/// termination; the agent stream drives exploration and scrambling.
EpisodeOutcome run_episode(const Layout& layout, AgentSet& agents, Rng& env_rng, Rng& agent_rng,
                           const EpisodeOptions& options);

struct MetricsRow {
  std::uint64_t step = 0;
  std::uint64_t episodes = 0;
  double mean_return = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

struct RunRecord {
  ExperimentConfig config;
  std::string fingerprint;
  std::vector<MetricsRow> series;
  AgentSet agents;
  std::uint64_t steps = 0;
  std::uint64_t episodes = 0;
  double wall_seconds = 0.0;
};

RunRecord train(const ExperimentConfig& config);
RunRecord baseline_q_learner(ExperimentConfig config);
RunRecord baseline_random_messages(ExperimentConfig config);

/// Mean of the last metrics row, or 0 for an empty series.
double final_return(const RunRecord& record);

struct EvalReport {
  double mean_return = 0.0;
  double normalized_return = 0.0;
  double mean_steps = 0.0;
  int episodes = 0;
  std::vector<int> returns;
};

/// Greedy rollouts. Episode e draws its goal and terminations from a stream
/// seeded by (seed, e), so runs with different scrambles stay paired.
EvalReport evaluate(const AgentSet& agents, const Layout& layout, int episodes, std::uint64_t seed,
                    const std::vector<bool>& scrambled = {});

// ---- persistence ----

nlohmann::json checkpoint_json(const AgentSet& agents, const ExperimentConfig& config);
AgentSet agents_from_checkpoint(const nlohmann::json& doc);

struct StoredRun {
  ExperimentConfig config;
  AgentSet agents;
  std::vector<MetricsRow> series;
};

/// Writes config.txt, metrics.jsonl, checkpoint.json and run_meta.json into `dir`.
void write_run(const RunRecord& record, const std::filesystem::path& dir);
StoredRun load_run(const std::filesystem::path& dir);
std::string metrics_jsonl(const std::vector<MetricsRow>& series);

/// Writes through a temporary file and renames, so a failure never leaves a truncated file.
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

// ---- sweeps ----

struct SweepGrid {
  ExperimentConfig base;
  /// key -> candidate values; the sweep runs their Cartesian product.
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
};

/// Sender and receiver learning rates each over {1e-2, 1e-3, 1e-4}, times epsilon {0.05, 0.1, 0.2} shared by both roles.
SweepGrid default_sweep_grid(const ExperimentConfig& base);
/// "key = v1, v2, ..." lines; single values set the base config.
SweepGrid parse_sweep_grid(std::string_view text);
std::vector<ExperimentConfig> expand_grid(const SweepGrid& grid);

struct SweepResult {
  ExperimentConfig config;
  std::string fingerprint;
  bool ok = false;
  std::string error;
  std::optional<RunRecord> record;
};

using SweepSink = std::function<void(const SweepResult&)>;

/// Runs every grid point on `workers` threads. A failing run is recorded and
/// the sweep continues. `on_done` is called under a lock as runs finish.
/// Results come back in grid order.
std::vector<SweepResult> sweep(const SweepGrid& grid, int workers, const SweepSink& on_done = {});
std::vector<SweepResult> sweep(const std::vector<ExperimentConfig>& configs, int workers,
                               const SweepSink& on_done = {});

/// Index of the best successful run per (layout, mode, senders, vocab), by
/// final training return; ties go to the lower receiver then sender learning rate.
std::vector<std::size_t> best_per_setup(const std::vector<SweepResult>& results);

}  // namespace emcomm
