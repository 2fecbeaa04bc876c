#include "emcomm/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "emcomm/analysis.hpp"
#include "emcomm/errors.hpp"

namespace fs = std::filesystem;

namespace emcomm {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Experiment flags shared by train and eval-style commands: (flag, config key).
const std::vector<std::pair<std::string, std::string>> kExperimentFlags = {
    {"--layout", "layout"},
    {"--mode", "mode"},
    {"--senders", "senders"},
    {"--vocab", "vocab"},
    {"--gamma", "gamma"},
    {"--steps", "total_steps"},
    {"--seed", "seed"},
    {"--lr", "lr"},
    {"--lr-sender", "lr_sender"},
    {"--lr-receiver", "lr_receiver"},
    {"--epsilon", "epsilon"},
    {"--epsilon-sender", "epsilon_sender"},
    {"--epsilon-receiver", "epsilon_receiver"},
    {"--hidden", "hidden"},
    {"--eval-episodes", "eval_episodes"},
};

std::vector<int> parse_message_tuple(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(trim(item), &used);
      if (used != trim(item).size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("--message: expected comma-separated integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("--message: empty message");
  return out;
}

std::string tuple_label(const std::vector<int>& message) {
  std::string out;
  for (std::size_t i = 0; i < message.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(message[i]);
  }
  return out;
}

void banner(std::ostream& out, std::string_view command, const ExperimentConfig& config) {
  out << "emcomm " << command << " fingerprint=" << config_fingerprint(config) << " run_seed=" << run_seed(config)
      << "\n";
}

void write_report(const fs::path& dir, const std::string& name, std::string_view content) {
  fs::create_directories(dir);
  write_text_file(dir / name, content);
}

Layout layout_for(const AgentSet& agents) { return make_layout(agents.layout); }

// ---- commands ----

struct TrainArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
  std::string out_dir;
  bool force = false;
};

int cmd_train(const TrainArgs& args, std::ostream& out) {
  CliConfig cli;
  if (!args.config_file.empty()) cli = parse_cli_config(read_text_file(args.config_file));
  for (const auto& [key, value] : args.overrides) set_config_value(cli.experiment, key, value);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cli.experiment, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const ExperimentConfig config = normalized(cli.experiment);
  validate(config);

  fs::path root = !args.out_dir.empty() ? fs::path(args.out_dir)
                  : !cli.output_dir.empty() ? fs::path(cli.output_dir)
                                            : default_output_root();
  const fs::path run_dir = root / config_fingerprint(config);
  if (fs::exists(run_dir / "checkpoint.json") && !args.force) {
    throw ConfigError("run directory " + run_dir.string() + " already holds a run (use --force to overwrite)");
  }
  banner(out, "train", config);
  const RunRecord record = train(config);
  write_run(record, run_dir);

  const Layout layout = make_layout(config.layout);
  const EvalReport eval = evaluate(record.agents, layout, config.eval_episodes, run_seed(config));
  const nlohmann::json eval_json = {{"episodes", eval.episodes},
                                    {"mean_return", eval.mean_return},
                                    {"normalized_return", eval.normalized_return},
                                    {"mean_steps", eval.mean_steps},
                                    {"theoretical_max", theoretical_max_return(layout, config.gamma)}};
  write_text_file(run_dir / "eval.json", eval_json.dump(2) + "\n");

  out << "run directory: " << run_dir.string() << "\n";
  out << "steps: " << record.steps << " episodes: " << record.episodes << "\n";
  out << "final training return: " << format_double(final_return(record)) << "\n";
  out << "greedy return: " << format_double(eval.mean_return) << " over " << eval.episodes << " episodes\n";
  out << "normalized greedy return: " << std::fixed << std::setprecision(4) << eval.normalized_return
      << std::defaultfloat << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, int episodes, std::optional<std::uint64_t> seed, std::ostream& out) {
  const StoredRun run = load_run(run_dir);
  const Layout layout = layout_for(run.agents);
  banner(out, "eval", run.config);
  const EvalReport eval = evaluate(run.agents, layout, episodes, seed.value_or(run_seed(run.config)));
  out << "greedy return: " << format_double(eval.mean_return) << " over " << eval.episodes << " episodes\n";
  out << "normalized greedy return: " << std::fixed << std::setprecision(4) << eval.normalized_return
      << std::defaultfloat << "\n";
  out << "mean steps: " << format_double(eval.mean_steps) << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& grid_file, int workers, const std::string& out_dir, std::ostream& out,
              std::ostream& err) {
  const std::string grid_text = read_text_file(grid_file);
  const SweepGrid grid = parse_sweep_grid(grid_text);
  const auto configs = expand_grid(grid);
  char sweep_id[17];
  std::snprintf(sweep_id, sizeof sweep_id, "%016llx", static_cast<unsigned long long>(fnv1a64(grid_text)));
  const fs::path root = (out_dir.empty() ? default_output_root() : fs::path(out_dir)) / ("sweep-" + std::string(sweep_id));
  fs::create_directories(root / "runs");
  const fs::path manifest = root / "manifest.csv";
  const bool fresh = !fs::exists(manifest);
  std::ofstream manifest_out(manifest, std::ios::app);
  if (!manifest_out) throw std::runtime_error("cannot open " + manifest.string());
  if (fresh) manifest_out << manifest_header() << std::flush;

  out << "emcomm sweep " << configs.size() << " runs -> " << root.string() << "\n";
  std::size_t done = 0;
  const auto results = sweep(configs, workers, [&](const SweepResult& r) {
    ++done;
    fs::path run_dir;
    if (r.ok) {
      run_dir = root / "runs" / r.fingerprint;
      try {
        write_run(*r.record, run_dir);
      } catch (const std::exception& e) {
        err << "failed to persist run " << r.fingerprint << ": " << e.what() << "\n";
        SweepResult failed = r;
        failed.ok = false;
        failed.error = e.what();
        manifest_out << manifest_row(failed, {}) << std::flush;
        return;
      }
    }
    manifest_out << manifest_row(r, run_dir) << std::flush;
    out << "[" << done << "/" << configs.size() << "] " << r.fingerprint << " "
        << (r.ok ? "ok final_return=" + format_double(final_return(*r.record)) : "failed: " + r.error) << "\n";
  });

  const auto best = best_per_setup(results);
  std::ostringstream best_csv;
  best_csv << "layout,mode,senders,vocab,gamma,fingerprint,lr_sender,lr_receiver,epsilon_sender,epsilon_receiver,"
              "final_return\n";
  for (const std::size_t i : best) {
    const auto& r = results[i];
    best_csv << r.config.layout << ',' << mode_name(r.config.mode) << ',' << r.config.senders << ','
             << r.config.vocab << ',' << format_double(r.config.gamma) << ',' << r.fingerprint << ','
             << format_double(r.config.lr_sender) << ',' << format_double(r.config.lr_receiver) << ','
             << format_double(r.config.epsilon_sender) << ',' << format_double(r.config.epsilon_receiver) << ','
             << format_double(final_return(*r.record)) << "\n";
  }
  write_text_file(root / "best.csv", best_csv.str());

  const auto succeeded = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.ok; });
  out << succeeded << " of " << results.size() << " runs succeeded\n";
  return succeeded > 0 ? kExitOk : kExitRuntime;
}

struct ProbeArgs {
  std::string kind;
  std::string run_dir;
  std::string message;
  std::string out_dir;
  std::string config_file;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  bool any_senders = false;
};

int cmd_probe(const ProbeArgs& args, std::ostream& out) {
  const StoredRun run = load_run(args.run_dir);
  const Layout layout = layout_for(run.agents);
  const fs::path report_dir = args.out_dir.empty() ? fs::path(args.run_dir) / "analysis" : fs::path(args.out_dir);
  banner(out, "probe " + args.kind, run.config);

  if (args.kind == "messages") {
    const MessageMap map = probe_message_map(run.agents, layout);
    const std::string ascii = render_message_map(map, layout);
    write_report(report_dir, "messages.csv", message_map_csv(map));
    write_report(report_dir, "messages.txt", ascii);
    write_report(report_dir, "messages.json", to_json(map).dump(2) + "\n");
    out << ascii << "distinct messages: " << distinct_messages(map) << "\n";
    return kExitOk;
  }

  if (args.kind == "flow") {
    std::vector<std::vector<int>> messages;
    std::optional<MessageMap> map;
    if (run.agents.mode == RunMode::Communicating) map = probe_message_map(run.agents, layout);
    if (!args.message.empty()) {
      messages.push_back(parse_message_tuple(args.message));
    } else if (map) {
      std::set<std::vector<int>> used;
      for (const auto& e : map->entries) used.insert(e.messages);
      messages.assign(used.begin(), used.end());
    } else {
      throw ConfigError("--message is required for checkpoints without learned senders");
    }
    nlohmann::json doc = {{"kind", "flow_maps"}, {"layout", layout.name()}, {"maps", nlohmann::json::array()}};
    for (const auto& message : messages) {
      const FlowMap flow = probe_flow_map(run.agents, message, layout);
      const std::string label = tuple_label(message);
      std::string ascii = render_flow_map(flow, layout);
      nlohmann::json entry = to_json(flow);
      if (map) {
        const auto region = message_region(*map, message);
        const bool sweep = !region.empty() && is_hamiltonian_over(flow, region);
        ascii += "goal region: " + std::to_string(region.size()) + " cells, hamiltonian sweep: " +
                 (sweep ? "yes" : "no") + "\n";
        entry["region_size"] = region.size();
        entry["hamiltonian_sweep"] = sweep;
      }
      write_report(report_dir, "flow-" + label + ".csv", flow_map_csv(flow));
      write_report(report_dir, "flow-" + label + ".txt", ascii);
      doc["maps"].push_back(entry);
      out << "message " << label << "\n" << ascii << "\n";
    }
    write_report(report_dir, "flow.json", doc.dump(2) + "\n");
    return kExitOk;
  }

  if (args.kind == "dominance") {
    CliConfig defaults;
    if (!args.config_file.empty()) defaults = parse_cli_config(read_text_file(args.config_file));
    const DominanceReport report =
        dominance_scramble(run.agents, layout, args.episodes.value_or(defaults.probe_episodes),
                           args.seed.value_or(run_seed(run.config)), args.any_senders || defaults.any_senders);
    write_report(report_dir, "dominance.csv", dominance_csv(report));
    write_report(report_dir, "dominance.json", to_json(report).dump(2) + "\n");
    out << "baseline return: " << format_double(report.baseline_return) << " [" << format_double(report.baseline_ci.low)
        << ", " << format_double(report.baseline_ci.high) << "]\n";
    out << "rank sender scrambled_return drop_percent 95%CI\n";
    for (std::size_t r = 0; r < report.drops.size(); ++r) {
      const auto& d = report.drops[r];
      out << r + 1 << ' ' << d.sender << ' ' << format_double(d.scrambled_return) << ' ' << std::fixed
          << std::setprecision(2) << d.drop_percent << " [" << d.drop_ci.low << ", " << d.drop_ci.high << "]"
          << std::defaultfloat << "\n";
    }
    return kExitOk;
  }

  if (args.kind == "composition") {
    const MessageMap map = probe_message_map(run.agents, layout);
    if (map.senders < 2) {
      throw UsageError("composition probe needs at least 2 senders; this checkpoint has " +
                       std::to_string(map.senders));
    }
    const CompositionReport report = compositional_report(std::span<const MessageMap>(&map, 1), layout);
    write_report(report_dir, "composition.json", to_json(report).dump(2) + "\n");
    write_report(report_dir, "messages.txt", render_message_map(map, layout));
    out << render_message_map(map, layout);
    out << "sender regions entropy_bits x_alignment y_alignment\n";
    for (const auto& s : report.senders) {
      out << s.sender << ' ' << s.regions << ' ' << format_double(s.entropy_bits) << ' '
          << format_double(s.x_alignment) << ' ' << format_double(s.y_alignment) << "\n";
    }
    for (const auto& p : report.pairs) {
      out << "mutual information " << p.first << "," << p.second << ": " << format_double(p.mutual_information_bits)
          << " bits\n";
    }
    return kExitOk;
  }

  throw ConfigError("unknown probe kind '" + args.kind + "' (expected messages, flow, dominance or composition)");
}

int cmd_oracle(const std::string& name, const std::string& file, std::ostream& out) {
  if (name.empty() == file.empty()) throw ConfigError("oracle needs either a layout name or --file");
  const Layout layout = file.empty() ? make_layout(name) : load_layout_file(file);
  out << "layout: " << layout.name() << "\n" << render_layout(layout);

  const CellDistances dist = shortest_distances(layout);
  out << "shortest distances from start:\n";
  for (int y = 0; y < kGridSize; ++y) {
    for (int x = 0; x < kGridSize; ++x) {
      const int d = dist[cell_index({x, y})];
      out << (d == kUnreachable ? std::string(" #") : (d < 10 ? " " : "") + std::to_string(d));
    }
    out << "\n";
  }
  const PathCover cover = min_shortest_path_cover(layout);
  out << "shortest path count: " << count_shortest_paths(layout) << "\n";
  out << "min shortest path cover: " << cover.size << "\n";
  for (const auto& path : cover.paths) {
    out << " ";
    for (const Position p : path) out << " (" << p.x << "," << p.y << ")";
    out << "\n";
  }
  out << "structure measure: 1/" << count_shortest_paths(layout) << " = " << format_double(structure_measure(layout))
      << "\n";
  for (const double gamma : {2.0 / 3.0, 0.8, 0.9}) {
    out << "theoretical max return (gamma=" << std::setprecision(4) << gamma
        << "): " << std::setprecision(6) << theoretical_max_return(layout, gamma) << std::defaultfloat << "\n";
  }
  return kExitOk;
}

}  // namespace

CliConfig parse_cli_config(std::string_view text) {
  CliConfig cli;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "output_dir") {
        cli.output_dir = value;
      } else if (key == "probe_episodes") {
        cli.probe_episodes = std::stoi(value);
      } else if (key == "any_senders") {
        if (value != "true" && value != "false") throw ConfigError("field 'any_senders': expected true or false");
        cli.any_senders = value == "true";
      } else {
        set_config_value(cli.experiment, key, value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::logic_error&) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  return cli;
}

fs::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

std::string manifest_header() {
  return "fingerprint,status,layout,mode,senders,vocab,capacity,gamma,lr_sender,lr_receiver,epsilon_sender,"
         "epsilon_receiver,seed,final_return,metrics_path,checkpoint_path,error\n";
}

std::string manifest_row(const SweepResult& r, const fs::path& run_dir) {
  std::string error = r.error;
  std::replace(error.begin(), error.end(), ',', ';');
  std::replace(error.begin(), error.end(), '\n', ' ');
  std::ostringstream row;
  const auto& c = r.config;
  row << r.fingerprint << ',' << (r.ok ? "ok" : "error") << ',' << c.layout << ',' << mode_name(c.mode) << ','
      << c.senders << ',' << c.vocab << ',' << c.capacity() << ',' << format_double(c.gamma) << ','
      << format_double(c.lr_sender) << ',' << format_double(c.lr_receiver) << ',' << format_double(c.epsilon_sender)
      << ',' << format_double(c.epsilon_receiver) << ',' << c.seed << ','
      << (r.ok && r.record ? format_double(final_return(*r.record)) : "") << ','
      << (r.ok ? (run_dir / "metrics.jsonl").string() : "") << ','
      << (r.ok ? (run_dir / "checkpoint.json").string() : "") << ',' << error << "\n";
  return row.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emergent communication in gridworld navigation: train, sweep, probe and inspect.", "emcomm"};
  app.require_subcommand(1);

  TrainArgs train_args;
  std::map<std::string, std::string> flag_values;
  auto* train_cmd = app.add_subcommand("train", "Train a sender/receiver setup and persist the run");
  train_cmd->add_option("--config", train_args.config_file, "Flat key = value config file");
  for (const auto& [flag, key] : kExperimentFlags) {
    train_cmd->add_option(flag, flag_values[key], "Override '" + key + "'");
  }
  train_cmd->add_option("--set", train_args.sets, "Generic key=value override (repeatable)");
  train_cmd->add_option("--out", train_args.out_dir, "Output root (default $EMCOMM_OUTPUT_ROOT or ./runs)");
  train_cmd->add_flag("--force", train_args.force, "Overwrite an existing run directory");

  std::string eval_dir;
  int eval_episodes = 1000;
  std::optional<std::uint64_t> eval_seed;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a stored run");
  eval_cmd->add_option("run_dir", eval_dir, "Run directory")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval_seed, "Evaluation seed (default: the run seed)");

  std::string grid_file;
  std::string sweep_out;
  int workers = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run every point of a hyperparameter grid");
  sweep_cmd->add_option("grid", grid_file, "Grid file: 'key = v1, v2, ...' lines")->required();
  sweep_cmd->add_option("--workers", workers, "Parallel runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep_out, "Output root");

  ProbeArgs probe_args;
  auto* probe_cmd = app.add_subcommand("probe", "Probe a trained run: messages, flow, dominance, composition");
  probe_cmd->add_option("kind", probe_args.kind, "messages | flow | dominance | composition")->required();
  probe_cmd->add_option("run_dir", probe_args.run_dir, "Run directory")->required();
  probe_cmd->add_option("--message", probe_args.message, "Message tuple for flow maps, e.g. 2 or 0,1");
  probe_cmd->add_option("--episodes", probe_args.episodes, "Episodes per dominance condition")
      ->check(CLI::PositiveNumber);
  probe_cmd->add_option("--seed", probe_args.seed, "Evaluation seed (default: the run seed)");
  probe_cmd->add_option("--out", probe_args.out_dir, "Report directory (default RUN_DIR/analysis)");
  probe_cmd->add_option("--config", probe_args.config_file, "Config file supplying probe_episodes and any_senders");
  probe_cmd->add_flag("--any-senders", probe_args.any_senders, "Allow dominance on setups without 5 senders");

  std::string oracle_name;
  std::string oracle_file;
  auto* oracle_cmd = app.add_subcommand("oracle", "Print exact graph oracles for a layout");
  oracle_cmd->add_option("layout", oracle_name, "Registered layout name");
  oracle_cmd->add_option("--file", oracle_file, "Layout file ('#' wall, '.' free, 'S' start)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      for (const auto& [flag, key] : kExperimentFlags) {
        if (train_cmd->count(flag) > 0) train_args.overrides[key] = flag_values[key];
      }
      return cmd_train(train_args, out);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_dir, eval_episodes, eval_seed, out);
    if (sweep_cmd->parsed()) return cmd_sweep(grid_file, workers, sweep_out, out, err);
    if (probe_cmd->parsed()) return cmd_probe(probe_args, out);
    if (oracle_cmd->parsed()) return cmd_oracle(oracle_name, oracle_file, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace emcomm
