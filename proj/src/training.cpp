#include "emcomm/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "emcomm/errors.hpp"

namespace emcomm {

namespace {

constexpr std::string_view kCheckpointFormat = "emcomm-checkpoint";
constexpr int kCheckpointVersion = 1;

// Stream salts for the independent random streams of a run.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kEnvStream = 2;
constexpr std::uint64_t kAgentStream = 3;
constexpr std::uint64_t kEvalAgentSalt = 0x5eedfaceULL;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view text) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("field '" + std::string(key) + "': expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

double parse_double(std::string_view key, std::string_view text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("field '" + std::string(key) + "': expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

// Fixed-capacity trailing mean over 0/1 returns.
class ReturnWindow {
 public:
  explicit ReturnWindow(int capacity) : values_(static_cast<std::size_t>(capacity), 0) {}

  void push(int value) {
    if (size_ == values_.size()) {
      sum_ -= values_[next_];
    } else {
      ++size_;
    }
    values_[next_] = value;
    sum_ += value;
    next_ = (next_ + 1) % values_.size();
  }

  bool empty() const { return size_ == 0; }
  double mean() const { return static_cast<double>(sum_) / static_cast<double>(size_); }

 private:
  std::vector<int> values_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  long long sum_ = 0;
};

MessageSeq emit_messages(const Layout& layout, AgentSet& agents, const EpisodeState& state, Rng& agent_rng,
                         const EpisodeOptions& options) {
  MessageSeq messages;
  if (agents.mode == RunMode::QLearning) {
    messages.vocab = kCellCount;
    messages.symbols = {cell_index(state.goal)};
    return messages;
  }
  messages.vocab = agents.vocab;
  messages.symbols.resize(static_cast<std::size_t>(agents.senders));
  std::vector<double> context;
  if (agents.mode == RunMode::Communicating) context = encode_sender_context(layout, state.goal);
  for (int i = 0; i < agents.senders; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const bool scrambled = idx < options.scrambled.size() && options.scrambled[idx];
    if (agents.mode == RunMode::RandomMessages || scrambled) {
      messages.symbols[idx] = agent_rng.uniform_int(agents.vocab);
    } else {
      messages.symbols[idx] = sender_act(agents.sender_agents[idx], context, agent_rng, !options.train);
    }
  }
  return messages;
}

nlohmann::json config_json(const ExperimentConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : config_entries(config)) j[key] = value;
  return j;
}

}  // namespace

std::string_view mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::Communicating: return "communicating";
    case RunMode::RandomMessages: return "random_messages";
    case RunMode::QLearning: return "q_learning";
  }
  return "?";
}

RunMode parse_mode(std::string_view name) {
  if (name == "communicating") return RunMode::Communicating;
  if (name == "random_messages") return RunMode::RandomMessages;
  if (name == "q_learning") return RunMode::QLearning;
  throw ConfigError("field 'mode': expected communicating, random_messages or q_learning, got '" +
                    std::string(name) + "'");
}

std::uint64_t ExperimentConfig::capacity() const {
  std::uint64_t c = 1;
  for (int i = 0; i < senders; ++i) c *= static_cast<std::uint64_t>(vocab);
  return c;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](std::string_view field, std::string_view why) {
    throw ConfigError("field '" + std::string(field) + "': " + std::string(why));
  };
  try {
    make_layout(c.layout);
  } catch (const ConfigError& e) {
    fail("layout", e.what());
  }
  if (c.senders < 1 || c.senders > kMaxSenders) fail("senders", "must lie in [1, 5]");
  if (c.vocab < 2) fail("vocab", "must be at least 2");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) fail("gamma", "must lie in (0, 1) so that p_term = 1 - gamma is a valid probability");
  if (!(c.epsilon_sender >= 0.0 && c.epsilon_sender <= 1.0)) fail("epsilon_sender", "must lie in [0, 1]");
  if (!(c.epsilon_receiver >= 0.0 && c.epsilon_receiver <= 1.0)) fail("epsilon_receiver", "must lie in [0, 1]");
  if (!(c.lr_sender > 0.0)) fail("lr_sender", "must be positive");
  if (!(c.lr_receiver > 0.0)) fail("lr_receiver", "must be positive");
  if (c.hidden < 0) fail("hidden", "must be non-negative");
  if (!(c.init_scale >= 0.0)) fail("init_scale", "must be non-negative");
  if (!(c.rms_decay >= 0.0 && c.rms_decay < 1.0)) fail("rms_decay", "must lie in [0, 1)");
  if (!(c.rms_epsilon > 0.0)) fail("rms_epsilon", "must be positive");
  if (c.batch_size < 1) fail("batch_size", "must be at least 1");
  if (c.metrics_every < 1) fail("metrics_every", "must be at least 1");
  if (c.metrics_window < 1) fail("metrics_window", "must be at least 1");
  if (c.eval_episodes < 1) fail("eval_episodes", "must be at least 1");
}

ExperimentConfig normalized(ExperimentConfig config) {
  if (config.mode == RunMode::QLearning) {
    config.senders = 1;
    config.vocab = kCellCount;
  }
  return config;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  return {
      {"layout", c.layout},
      {"mode", std::string(mode_name(c.mode))},
      {"senders", std::to_string(c.senders)},
      {"vocab", std::to_string(c.vocab)},
      {"gamma", format_double(c.gamma)},
      {"epsilon_sender", format_double(c.epsilon_sender)},
      {"epsilon_receiver", format_double(c.epsilon_receiver)},
      {"lr_sender", format_double(c.lr_sender)},
      {"lr_receiver", format_double(c.lr_receiver)},
      {"hidden", std::to_string(c.hidden)},
      {"init_scale", format_double(c.init_scale)},
      {"rms_decay", format_double(c.rms_decay)},
      {"rms_epsilon", format_double(c.rms_epsilon)},
      {"batch_size", std::to_string(c.batch_size)},
      {"total_steps", std::to_string(c.total_steps)},
      {"metrics_every", std::to_string(c.metrics_every)},
      {"metrics_window", std::to_string(c.metrics_window)},
      {"eval_episodes", std::to_string(c.eval_episodes)},
      {"seed", std::to_string(c.seed)},
  };
}

void set_config_value(ExperimentConfig& c, std::string_view key_in, std::string_view value_in) {
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  if (key == "layout") {
    c.layout = value;
  } else if (key == "mode") {
    c.mode = parse_mode(value);
  } else if (key == "senders") {
    c.senders = parse_int<int>(key, value);
  } else if (key == "vocab") {
    c.vocab = parse_int<int>(key, value);
  } else if (key == "gamma") {
    c.gamma = parse_double(key, value);
  } else if (key == "epsilon") {
    c.epsilon_sender = c.epsilon_receiver = parse_double(key, value);
  } else if (key == "epsilon_sender") {
    c.epsilon_sender = parse_double(key, value);
  } else if (key == "epsilon_receiver") {
    c.epsilon_receiver = parse_double(key, value);
  } else if (key == "lr") {
    c.lr_sender = c.lr_receiver = parse_double(key, value);
  } else if (key == "lr_sender") {
    c.lr_sender = parse_double(key, value);
  } else if (key == "lr_receiver") {
    c.lr_receiver = parse_double(key, value);
  } else if (key == "hidden") {
    c.hidden = parse_int<int>(key, value);
  } else if (key == "init_scale") {
    c.init_scale = parse_double(key, value);
  } else if (key == "rms_decay") {
    c.rms_decay = parse_double(key, value);
  } else if (key == "rms_epsilon") {
    c.rms_epsilon = parse_double(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_int<int>(key, value);
  } else if (key == "total_steps" || key == "steps") {
    c.total_steps = parse_int<std::uint64_t>(key, value);
  } else if (key == "metrics_every") {
    c.metrics_every = parse_int<std::uint64_t>(key, value);
  } else if (key == "metrics_window") {
    c.metrics_window = parse_int<int>(key, value);
  } else if (key == "eval_episodes") {
    c.eval_episodes = parse_int<int>(key, value);
  } else if (key == "seed") {
    c.seed = parse_int<std::uint64_t>(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string canonical_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, value] : config_entries(config)) out += key + " = " + value + "\n";
  return out;
}

std::string config_fingerprint(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_text(normalized(config)))));
  return buf;
}

std::uint64_t run_seed(const ExperimentConfig& config) {
  ExperimentConfig hyper = normalized(config);
  hyper.seed = 0;
  return mix_seed(config.seed, fnv1a64(canonical_text(hyper)));
}

AgentSet make_agents(const ExperimentConfig& raw, Rng& rng) {
  const ExperimentConfig config = normalized(raw);
  AgentSet agents;
  agents.mode = config.mode;
  agents.layout = config.layout;
  agents.senders = config.senders;
  agents.vocab = config.vocab;
  if (config.mode == RunMode::Communicating) {
    const RmsPropConfig opt{config.lr_sender, config.rms_decay, config.rms_epsilon, config.batch_size};
    for (int i = 0; i < config.senders; ++i) {
      agents.sender_agents.push_back(make_sender(config.vocab, config.epsilon_sender, opt, rng, config.init_scale));
    }
  }
  const RmsPropConfig opt{config.lr_receiver, config.rms_decay, config.rms_epsilon, config.batch_size};
  agents.receiver = make_receiver(receiver_observation_size(config.senders, config.vocab), config.hidden,
                                  config.gamma, config.epsilon_receiver, opt, rng, config.init_scale);
  return agents;
}

EpisodeOutcome run_episode(const Layout& layout, AgentSet& agents, Rng& env_rng, Rng& agent_rng,
                           const EpisodeOptions& options) {
  if (agents.mode == RunMode::Communicating &&
      static_cast<int>(agents.sender_agents.size()) != agents.senders) {
    throw UsageError("agent set holds " + std::to_string(agents.sender_agents.size()) + " senders, expected " +
                     std::to_string(agents.senders));
  }
  const double p_term = 1.0 - agents.receiver.gamma;

  EpisodeOutcome outcome;
  EpisodeState& state = outcome.final_state;
  state = reset(layout, env_rng);
  // t = 0: the senders act; this does not consume an environment step.
  state.messages = emit_messages(layout, agents, state, agent_rng, options);
  const MessageSeq& messages = *state.messages;
  if (agents.receiver.net.input_dim() != receiver_observation_size(messages.senders(), messages.vocab)) {
    throw UsageError("receiver input width does not match the message layout");
  }

  std::vector<double> obs = encode_receiver_observation(state.position, messages);
  while (!state.done) {
    const NavAction action = receiver_act(agents.receiver, obs, agent_rng, !options.train);
    const int reward = step(layout, state, action, env_rng, p_term);
    std::vector<double> next_obs = encode_receiver_observation(state.position, messages);
    if (options.train) {
      Transition tr{std::move(obs), action, reward, next_obs, state.done};
      receiver_update(agents.receiver, tr);
    }
    obs = std::move(next_obs);
  }
  outcome.steps = state.t;
  outcome.episode_return = state.goal_reached ? 1 : 0;

  if (options.train && agents.mode == RunMode::Communicating) {
    for (int i = 0; i < agents.senders; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (idx < options.scrambled.size() && options.scrambled[idx]) continue;
      sender_update(agents.sender_agents[idx], layout, state, i);
    }
  }
  return outcome;
}

RunRecord train(const ExperimentConfig& input) {
  const auto started = std::chrono::steady_clock::now();
  const ExperimentConfig config = normalized(input);
  validate(config);
  const Layout layout = make_layout(config.layout);
  const std::uint64_t seed = run_seed(config);
  Rng init_rng(mix_seed(seed, kInitStream));
  Rng env_rng(mix_seed(seed, kEnvStream));
  Rng agent_rng(mix_seed(seed, kAgentStream));

  RunRecord record;
  record.config = config;
  record.fingerprint = config_fingerprint(config);
  record.agents = make_agents(config, init_rng);

  ReturnWindow window(config.metrics_window);
  EpisodeOptions options;
  options.train = true;
  std::uint64_t next_sample = config.metrics_every;
  while (record.steps < config.total_steps) {
    const EpisodeOutcome outcome = run_episode(layout, record.agents, env_rng, agent_rng, options);
    record.steps += static_cast<std::uint64_t>(outcome.steps);
    ++record.episodes;
    window.push(outcome.episode_return);
    if (record.steps >= next_sample) {
      record.series.push_back({record.steps, record.episodes, window.mean()});
      next_sample = (record.steps / config.metrics_every + 1) * config.metrics_every;
    }
  }
  if (!window.empty() && (record.series.empty() || record.series.back().step < record.steps)) {
    record.series.push_back({record.steps, record.episodes, window.mean()});
  }
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

RunRecord baseline_q_learner(ExperimentConfig config) {
  config.mode = RunMode::QLearning;
  return train(config);
}

RunRecord baseline_random_messages(ExperimentConfig config) {
  config.mode = RunMode::RandomMessages;
  return train(config);
}

double final_return(const RunRecord& record) {
  return record.series.empty() ? 0.0 : record.series.back().mean_return;
}

EvalReport evaluate(const AgentSet& trained, const Layout& layout, int episodes, std::uint64_t seed,
                    const std::vector<bool>& scrambled) {
  if (episodes < 1) throw UsageError("evaluation needs at least one episode");
  if (trained.layout != layout.name()) {
    throw UsageError("checkpoint was trained on '" + trained.layout + "', not '" + layout.name() + "'");
  }
  AgentSet agents = trained;
  EpisodeOptions options;
  options.train = false;
  options.scrambled = scrambled;

  EvalReport report;
  report.episodes = episodes;
  report.returns.reserve(static_cast<std::size_t>(episodes));
  long long total_return = 0;
  long long total_steps = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng env_rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
    Rng agent_rng(mix_seed(seed ^ kEvalAgentSalt, static_cast<std::uint64_t>(e)));
    const EpisodeOutcome outcome = run_episode(layout, agents, env_rng, agent_rng, options);
    report.returns.push_back(outcome.episode_return);
    total_return += outcome.episode_return;
    total_steps += outcome.steps;
  }
  report.mean_return = static_cast<double>(total_return) / episodes;
  report.mean_steps = static_cast<double>(total_steps) / episodes;
  report.normalized_return = report.mean_return / theoretical_max_return(layout, agents.receiver.gamma);
  return report;
}

// ---- persistence ----

namespace {

nlohmann::json sender_json(const SenderAgent& s, int index, const AgentSet& agents) {
  return {{"role", "sender"}, {"index", index},       {"vocab", s.vocab},           {"senders", agents.senders},
          {"epsilon", s.epsilon}, {"layout", agents.layout}, {"net", s.net}, {"optimizer", s.optimizer}};
}

}  // namespace

nlohmann::json checkpoint_json(const AgentSet& agents, const ExperimentConfig& config) {
  nlohmann::json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["fingerprint"] = config_fingerprint(config);
  doc["config"] = config_json(config);
  doc["rng"] = {{"engine", "mt19937_64"}, {"run_seed", run_seed(config)}};
  doc["metadata"] = {{"mode", mode_name(agents.mode)},
                     {"layout", agents.layout},
                     {"senders", agents.senders},
                     {"vocab", agents.vocab},
                     {"gamma", agents.receiver.gamma}};
  auto senders = nlohmann::json::array();
  for (std::size_t i = 0; i < agents.sender_agents.size(); ++i) {
    senders.push_back(sender_json(agents.sender_agents[i], static_cast<int>(i), agents));
  }
  doc["senders"] = std::move(senders);
  doc["receiver"] = {{"role", "receiver"},
                     {"senders", agents.senders},
                     {"vocab", agents.vocab},
                     {"gamma", agents.receiver.gamma},
                     {"epsilon", agents.receiver.epsilon},
                     {"layout", agents.layout},
                     {"net", agents.receiver.net},
                     {"optimizer", agents.receiver.optimizer}};
  return doc;
}

AgentSet agents_from_checkpoint(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) throw ConfigError("not an emcomm checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
    const auto& meta = doc.at("metadata");
    AgentSet agents;
    agents.mode = parse_mode(meta.at("mode").get<std::string>());
    agents.layout = meta.at("layout").get<std::string>();
    agents.senders = meta.at("senders").get<int>();
    agents.vocab = meta.at("vocab").get<int>();
    for (const auto& js : doc.at("senders")) {
      SenderAgent s;
      s.net = js.at("net").get<DenseNet>();
      s.optimizer = js.at("optimizer").get<RmsProp>();
      s.vocab = js.at("vocab").get<int>();
      s.epsilon = js.at("epsilon").get<double>();
      agents.sender_agents.push_back(std::move(s));
    }
    const auto& jr = doc.at("receiver");
    agents.receiver.net = jr.at("net").get<DenseNet>();
    agents.receiver.optimizer = jr.at("optimizer").get<RmsProp>();
    agents.receiver.gamma = jr.at("gamma").get<double>();
    agents.receiver.epsilon = jr.at("epsilon").get<double>();
    if (agents.mode == RunMode::Communicating &&
        static_cast<int>(agents.sender_agents.size()) != agents.senders) {
      throw ConfigError("checkpoint sender count does not match its metadata");
    }
    return agents;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

std::string metrics_jsonl(const std::vector<MetricsRow>& series) {
  std::string out;
  for (const auto& row : series) {
    const nlohmann::json j = {{"step", row.step}, {"episodes", row.episodes}, {"mean_return", row.mean_return}};
    out += j.dump() + "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_run(const RunRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "config.txt", canonical_text(record.config));
  write_text_file(dir / "metrics.jsonl", metrics_jsonl(record.series));
  write_text_file(dir / "checkpoint.json", checkpoint_json(record.agents, record.config).dump() + "\n");
  const nlohmann::json meta = {{"fingerprint", record.fingerprint},
                               {"run_seed", run_seed(record.config)},
                               {"steps", record.steps},
                               {"episodes", record.episodes},
                               {"wall_seconds", record.wall_seconds}};
  write_text_file(dir / "run_meta.json", meta.dump(2) + "\n");
}

StoredRun load_run(const std::filesystem::path& dir) {
  StoredRun run;
  std::istringstream config_text(read_text_file(dir / "config.txt"));
  std::string line;
  while (std::getline(config_text, line)) {
    const auto eq = line.find('=');
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw ConfigError("malformed line in config.txt: " + line);
    set_config_value(run.config, line.substr(0, eq), line.substr(eq + 1));
  }
  std::istringstream metrics(read_text_file(dir / "metrics.jsonl"));
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    run.series.push_back({j.at("step").get<std::uint64_t>(), j.at("episodes").get<std::uint64_t>(),
                          j.at("mean_return").get<double>()});
  }
  run.agents = agents_from_checkpoint(nlohmann::json::parse(read_text_file(dir / "checkpoint.json")));
  return run;
}

// ---- sweeps ----

SweepGrid default_sweep_grid(const ExperimentConfig& base) {
  SweepGrid grid;
  grid.base = base;
  grid.axes = {{"lr_sender", {"0.01", "0.001", "0.0001"}},
               {"lr_receiver", {"0.01", "0.001", "0.0001"}},
               {"epsilon", {"0.05", "0.1", "0.2"}}};
  return grid;
}

SweepGrid parse_sweep_grid(std::string_view text) {
  SweepGrid grid;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("sweep grid line " + std::to_string(line_no) + ": expected 'key = values'");
    }
    const std::string key = trim(line.substr(0, eq));
    std::vector<std::string> values;
    std::stringstream list(line.substr(eq + 1));
    std::string item;
    while (std::getline(list, item, ',')) {
      item = trim(item);
      if (item.empty()) throw ConfigError("sweep grid line " + std::to_string(line_no) + ": empty value");
      ExperimentConfig probe;
      set_config_value(probe, key, item);  // rejects unknown keys and bad values early
      values.push_back(item);
    }
    if (values.empty()) throw ConfigError("sweep grid line " + std::to_string(line_no) + ": no values");
    if (values.size() == 1) {
      set_config_value(grid.base, key, values.front());
    } else {
      grid.axes.emplace_back(key, std::move(values));
    }
  }
  return grid;
}

std::vector<ExperimentConfig> expand_grid(const SweepGrid& grid) {
  std::vector<ExperimentConfig> out{grid.base};
  for (const auto& [key, values] : grid.axes) {
    std::vector<ExperimentConfig> next;
    next.reserve(out.size() * values.size());
    for (const auto& config : out) {
      for (const auto& value : values) {
        ExperimentConfig c = config;
        set_config_value(c, key, value);
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::vector<SweepResult> sweep(const SweepGrid& grid, int workers, const SweepSink& on_done) {
  return sweep(expand_grid(grid), workers, on_done);
}

std::vector<SweepResult> sweep(const std::vector<ExperimentConfig>& configs, int workers, const SweepSink& on_done) {
  if (configs.empty()) throw ConfigError("sweep grid is empty");
  std::vector<SweepResult> results(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex sink_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      SweepResult& result = results[i];
      result.config = normalized(configs[i]);
      result.fingerprint = config_fingerprint(result.config);
      try {
        result.record = train(result.config);
        result.ok = true;
      } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
      }
      if (on_done) {
        std::lock_guard lock(sink_mutex);
        on_done(result);
      }
    }
  };

  const int n = std::clamp(workers, 1, static_cast<int>(configs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  return results;
}

std::vector<std::size_t> best_per_setup(const std::vector<SweepResult>& results) {
  using Key = std::tuple<std::string, int, int, int, double>;
  std::map<Key, std::size_t> best;
  std::vector<Key> order;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.ok || !r.record) continue;
    const Key key{r.config.layout, static_cast<int>(r.config.mode), r.config.senders, r.config.vocab,
                  r.config.gamma};
    const auto it = best.find(key);
    if (it == best.end()) {
      best.emplace(key, i);
      order.push_back(key);
      continue;
    }
    const auto& incumbent = results[it->second];
    const double a = final_return(*r.record);
    const double b = final_return(*incumbent.record);
    const bool better =
        a > b || (a == b && std::tie(r.config.lr_receiver, r.config.lr_sender) <
                                std::tie(incumbent.config.lr_receiver, incumbent.config.lr_sender));
    if (better) it->second = i;
  }
  std::vector<std::size_t> out;
  for (const auto& key : order) out.push_back(best.at(key));
  return out;
}

}  // namespace emcomm
