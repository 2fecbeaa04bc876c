#include "emcomm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "emcomm/errors.hpp"

namespace emcomm {

namespace {

char symbol_glyph(int symbol) {
  constexpr std::string_view kGlyphs = "0123456789abcdefghijklmnopqrstuvwxyz";
  return symbol >= 0 && symbol < static_cast<int>(kGlyphs.size()) ? kGlyphs[static_cast<std::size_t>(symbol)] : '*';
}

void check_layout(const AgentSet& agents, const Layout& layout) {
  if (agents.layout != layout.name()) {
    throw UsageError("checkpoint was trained on '" + agents.layout + "', not '" + layout.name() + "'");
  }
}

double percentile(std::vector<double>& sorted, double q) {
  const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size() - 1) + 0.5));
  return sorted[std::min(idx, sorted.size() - 1)];
}

double entropy_bits(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (const int l : labels) ++counts[l];
  double h = 0.0;
  const auto n = static_cast<double>(labels.size());
  for (const auto& [label, count] : counts) {
    const double p = count / n;
    h -= p * std::log2(p);
  }
  return h;
}

double mutual_information_bits(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, int> joint;
  std::map<int, int> ca;
  std::map<int, int> cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  const auto n = static_cast<double>(a.size());
  double mi = 0.0;
  for (const auto& [key, count] : joint) {
    const double pab = count / n;
    mi += pab * std::log2(pab / ((ca[key.first] / n) * (cb[key.second] / n)));
  }
  return std::max(0.0, mi);
}

// Share of off-axis cells whose region (restricted to off-axis cells) sits on one side of the split.
double axis_alignment(const std::vector<Position>& cells, const std::vector<int>& labels, bool split_on_x) {
  std::map<int, std::set<int>> sides;  // label -> sides touched
  std::vector<std::pair<int, int>> considered;  // (label, side)
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int coord = split_on_x ? cells[i].x : cells[i].y;
    const int mid = split_on_x ? kCenter.x : kCenter.y;
    if (coord == mid) continue;
    const int side = coord < mid ? 0 : 1;
    sides[labels[i]].insert(side);
    considered.emplace_back(labels[i], side);
  }
  if (considered.empty()) return 1.0;
  const auto aligned = std::count_if(considered.begin(), considered.end(),
                                     [&](const auto& entry) { return sides[entry.first].size() == 1; });
  return static_cast<double>(aligned) / static_cast<double>(considered.size());
}

}  // namespace

const std::vector<int>& MessageMap::at(Position cell) const {
  for (const auto& entry : entries) {
    if (entry.cell == cell) return entry.messages;
  }
  throw UsageError("cell (" + std::to_string(cell.x) + "," + std::to_string(cell.y) + ") is not a goal candidate");
}

MessageMap probe_message_map(const AgentSet& agents, const Layout& layout) {
  check_layout(agents, layout);
  if (agents.mode != RunMode::Communicating) {
    throw UsageError("message maps need learned senders; this checkpoint is '" + std::string(mode_name(agents.mode)) + "'");
  }
  MessageMap map;
  map.layout = layout.name();
  map.senders = agents.senders;
  map.vocab = agents.vocab;
  Rng unused(0);  // greedy selection draws nothing
  for (const Position cell : layout.goal_candidates()) {
    const auto context = encode_sender_context(layout, cell);
    MessageMapEntry entry{cell, {}};
    for (const auto& sender : agents.sender_agents) entry.messages.push_back(sender_act(sender, context, unused, true));
    map.entries.push_back(std::move(entry));
  }
  return map;
}

std::vector<Position> message_region(const MessageMap& map, const std::vector<int>& message) {
  std::vector<Position> region;
  for (const auto& entry : map.entries) {
    if (entry.messages == message) region.push_back(entry.cell);
  }
  return region;
}

int distinct_messages(const MessageMap& map) {
  std::set<std::vector<int>> used;
  for (const auto& entry : map.entries) used.insert(entry.messages);
  return static_cast<int>(used.size());
}

FlowMap probe_flow_map(const AgentSet& agents, const std::vector<int>& message, const Layout& layout) {
  check_layout(agents, layout);
  MessageSeq seq;
  seq.symbols = message;
  seq.vocab = agents.mode == RunMode::QLearning ? kCellCount : agents.vocab;
  if (static_cast<int>(message.size()) != agents.senders) {
    throw UsageError("flow probe needs " + std::to_string(agents.senders) + " message symbols, got " +
                     std::to_string(message.size()));
  }
  validate_messages(seq);

  FlowMap flow;
  flow.layout = layout.name();
  flow.message = message;
  Rng unused(0);
  for (const Position cell : layout.free_cells()) {
    const auto obs = encode_receiver_observation(cell, seq);
    flow.arrows[static_cast<std::size_t>(cell_index(cell))] = receiver_act(agents.receiver, obs, unused, true);
  }

  std::array<bool, kCellCount> visited{};
  Position current = layout.start();
  while (!visited[static_cast<std::size_t>(cell_index(current))]) {
    visited[static_cast<std::size_t>(cell_index(current))] = true;
    flow.trajectory.push_back(current);
    const NavAction a = *flow.arrows[static_cast<std::size_t>(cell_index(current))];
    const Position next = apply_move(current, a);
    if (layout.is_free(next)) current = next;
  }
  flow.cycle_entry = current;
  return flow;
}

bool is_hamiltonian_over(const FlowMap& flow, std::span<const Position> region) {
  return std::all_of(region.begin(), region.end(), [&](Position p) {
    return std::find(flow.trajectory.begin(), flow.trajectory.end(), p) != flow.trajectory.end();
  });
}

std::vector<CapacityCurvePoint> sweep_capacity_curve(std::span<const CapacitySample> samples, const std::string& layout,
                                                     std::vector<std::string>* warnings) {
  std::map<std::uint64_t, std::vector<double>> groups;
  for (const auto& s : samples) {
    if (s.layout != layout) {
      if (warnings) warnings->push_back("skipped sample from layout '" + s.layout + "'");
      continue;
    }
    if (!std::isfinite(s.normalized_return) || s.senders < 1 || s.vocab < 1) {
      if (warnings) warnings->push_back("skipped malformed sample");
      continue;
    }
    std::uint64_t c = 1;
    for (int i = 0; i < s.senders; ++i) c *= static_cast<std::uint64_t>(s.vocab);
    groups[c].push_back(s.normalized_return);
  }
  if (groups.empty() && warnings) warnings->push_back("no samples for layout '" + layout + "'");

  std::vector<CapacityCurvePoint> curve;
  for (const auto& [capacity, values] : groups) {
    CapacityCurvePoint point;
    point.capacity = capacity;
    point.layout = layout;
    point.runs = static_cast<int>(values.size());
    const double n = static_cast<double>(values.size());
    point.mean_normalized_return = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
      double ss = 0.0;
      for (const double v : values) ss += (v - point.mean_normalized_return) * (v - point.mean_normalized_return);
      point.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    curve.push_back(point);
  }
  return curve;
}

Correlation correlate(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw UsageError("correlate needs equal-length inputs");
  if (xs.size() < 3) throw UsageError("correlate needs at least 3 points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("correlation is undefined for a constant input");

  Correlation out;
  out.n = static_cast<int>(xs.size());
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(out.r) == 1.0) {
    out.p_value = 0.0;
  } else {
    const double df = n - 2.0;
    const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
    const boost::math::students_t dist(df);
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return out;
}

double structure_measure(const Layout& layout) {
  return 1.0 / static_cast<double>(count_shortest_paths(layout));
}

Interval bootstrap_mean_ci(std::span<const int> values, int resamples, Rng& rng, double level) {
  if (values.empty()) throw UsageError("bootstrap needs at least one value");
  const int n = static_cast<int>(values.size());
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    long long sum = 0;
    for (int i = 0; i < n; ++i) sum += values[static_cast<std::size_t>(rng.uniform_int(n))];
    m = static_cast<double>(sum) / n;
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return {percentile(means, tail), percentile(means, 1.0 - tail)};
}

DominanceReport dominance_scramble(const AgentSet& agents, const Layout& layout, int episodes, std::uint64_t seed,
                                   bool allow_any_senders) {
  check_layout(agents, layout);
  if (agents.mode != RunMode::Communicating) throw UsageError("dominance needs a communicating checkpoint");
  if (agents.senders != kMaxSenders && !allow_any_senders) {
    throw UsageError("dominance scrambling is defined for 5-sender setups; this checkpoint has " +
                     std::to_string(agents.senders) + " (enable the any-sender option to override)");
  }
  if (episodes < 1) throw UsageError("dominance needs at least one episode");

  const EvalReport baseline = evaluate(agents, layout, episodes, seed);
  DominanceReport report;
  report.episodes = episodes;
  report.baseline_return = baseline.mean_return;
  Rng boot_rng(mix_seed(seed, 0xb007ULL));
  report.baseline_ci = bootstrap_mean_ci(baseline.returns, kBootstrapResamples, boot_rng);

  auto drop_of = [](double base, double scrambled) { return base > 0.0 ? (base - scrambled) / base * 100.0 : 0.0; };

  for (int i = 0; i < agents.senders; ++i) {
    std::vector<bool> mask(static_cast<std::size_t>(agents.senders), false);
    mask[static_cast<std::size_t>(i)] = true;
    const EvalReport scrambled = evaluate(agents, layout, episodes, seed, mask);

    SenderDrop drop;
    drop.sender = i;
    drop.scrambled_return = scrambled.mean_return;
    drop.scrambled_ci = bootstrap_mean_ci(scrambled.returns, kBootstrapResamples, boot_rng);
    drop.drop_percent = drop_of(baseline.mean_return, scrambled.mean_return);

    // Paired bootstrap: the same episode indices for both conditions.
    std::vector<double> drops(static_cast<std::size_t>(kBootstrapResamples));
    for (auto& d : drops) {
      long long base_sum = 0;
      long long scr_sum = 0;
      for (int e = 0; e < episodes; ++e) {
        const auto k = static_cast<std::size_t>(boot_rng.uniform_int(episodes));
        base_sum += baseline.returns[k];
        scr_sum += scrambled.returns[k];
      }
      d = drop_of(static_cast<double>(base_sum) / episodes, static_cast<double>(scr_sum) / episodes);
    }
    std::sort(drops.begin(), drops.end());
    drop.drop_ci = {percentile(drops, 0.025), percentile(drops, 0.975)};
    report.drops.push_back(drop);
  }
  std::stable_sort(report.drops.begin(), report.drops.end(),
                   [](const SenderDrop& a, const SenderDrop& b) { return a.drop_percent > b.drop_percent; });
  return report;
}

CompositionReport compositional_report(std::span<const MessageMap> maps, const Layout& layout) {
  if (maps.empty()) throw UsageError("composition report needs at least one message map");
  std::vector<Position> cells;
  for (const auto& e : maps.front().entries) cells.push_back(e.cell);
  std::vector<std::vector<int>> labelings;
  for (const auto& map : maps) {
    if (map.layout != layout.name()) {
      throw UsageError("message map for '" + map.layout + "' does not match layout '" + layout.name() + "'");
    }
    if (map.entries.size() != cells.size()) throw UsageError("message maps cover different cells");
    for (int s = 0; s < map.senders; ++s) {
      std::vector<int> labels;
      for (std::size_t i = 0; i < map.entries.size(); ++i) {
        if (map.entries[i].cell != cells[i]) throw UsageError("message maps cover different cells");
        labels.push_back(map.entries[i].messages.at(static_cast<std::size_t>(s)));
      }
      labelings.push_back(std::move(labels));
    }
  }
  if (labelings.size() < 2) throw UsageError("composition report needs at least two senders");

  CompositionReport report;
  report.layout = layout.name();
  for (std::size_t s = 0; s < labelings.size(); ++s) {
    SenderPartition p;
    p.sender = static_cast<int>(s);
    p.regions = static_cast<int>(std::set<int>(labelings[s].begin(), labelings[s].end()).size());
    p.entropy_bits = entropy_bits(labelings[s]);
    p.x_alignment = axis_alignment(cells, labelings[s], true);
    p.y_alignment = axis_alignment(cells, labelings[s], false);
    report.senders.push_back(p);
  }
  for (std::size_t a = 0; a < labelings.size(); ++a) {
    for (std::size_t b = a + 1; b < labelings.size(); ++b) {
      report.pairs.push_back({static_cast<int>(a), static_cast<int>(b),
                              mutual_information_bits(labelings[a], labelings[b])});
    }
  }
  return report;
}

// ---- rendering ----

std::string render_message_map(const MessageMap& map, const Layout& layout) {
  std::string out;
  for (int s = 0; s < map.senders; ++s) {
    if (map.senders > 1) out += "sender " + std::to_string(s) + "\n";
    for (int y = 0; y < kGridSize; ++y) {
      for (int x = 0; x < kGridSize; ++x) {
        const Position p{x, y};
        if (p == layout.start()) {
          out += ' ';
        } else if (layout.is_wall(p)) {
          out += '#';
        } else {
          out += symbol_glyph(map.at(p).at(static_cast<std::size_t>(s)));
        }
      }
      out += '\n';
    }
    if (s + 1 < map.senders) out += '\n';
  }
  return out;
}

std::string message_map_csv(const MessageMap& map) {
  std::ostringstream out;
  out << "x,y,cell";
  for (int s = 0; s < map.senders; ++s) out << ",sender_" << s;
  out << "\n";
  for (const auto& e : map.entries) {
    out << e.cell.x << ',' << e.cell.y << ',' << cell_index(e.cell);
    for (const int m : e.messages) out << ',' << m;
    out << "\n";
  }
  return out.str();
}

std::string render_flow_map(const FlowMap& flow, const Layout& layout) {
  std::string out;
  for (int y = 0; y < kGridSize; ++y) {
    for (int x = 0; x < kGridSize; ++x) {
      const Position p{x, y};
      if (p == layout.start()) {
        out += ' ';
      } else if (layout.is_wall(p)) {
        out += '#';
      } else {
        out += action_glyph(*flow.arrows[static_cast<std::size_t>(cell_index(p))]);
      }
    }
    out += '\n';
  }
  out += "start: ";
  out += action_glyph(*flow.arrows[static_cast<std::size_t>(cell_index(layout.start()))]);
  out += "\ntrajectory:";
  for (const Position p : flow.trajectory) out += " (" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
  out += " -> (" + std::to_string(flow.cycle_entry.x) + "," + std::to_string(flow.cycle_entry.y) + ")\n";
  return out;
}

std::string flow_map_csv(const FlowMap& flow) {
  std::ostringstream out;
  out << "x,y,cell,action\n";
  for (int i = 0; i < kCellCount; ++i) {
    const auto& a = flow.arrows[static_cast<std::size_t>(i)];
    if (!a) continue;
    const Position p = cell_position(i);
    out << p.x << ',' << p.y << ',' << i << ',' << action_name(*a) << "\n";
  }
  return out.str();
}

std::string dominance_csv(const DominanceReport& report) {
  std::ostringstream out;
  out << "rank,sender,scrambled_return,scrambled_ci_low,scrambled_ci_high,drop_percent,drop_ci_low,drop_ci_high\n";
  out << "baseline,,"<< format_double(report.baseline_return) << ',' << format_double(report.baseline_ci.low) << ','
      << format_double(report.baseline_ci.high) << ",0,0,0\n";
  for (std::size_t r = 0; r < report.drops.size(); ++r) {
    const auto& d = report.drops[r];
    out << r + 1 << ',' << d.sender << ',' << format_double(d.scrambled_return) << ','
        << format_double(d.scrambled_ci.low) << ',' << format_double(d.scrambled_ci.high) << ','
        << format_double(d.drop_percent) << ',' << format_double(d.drop_ci.low) << ','
        << format_double(d.drop_ci.high) << "\n";
  }
  return out.str();
}

std::string capacity_curve_csv(std::span<const CapacityCurvePoint> points) {
  std::ostringstream out;
  out << "layout,capacity,mean_normalized_return,standard_error,runs\n";
  for (const auto& p : points) {
    out << p.layout << ',' << p.capacity << ',' << format_double(p.mean_normalized_return) << ','
        << format_double(p.standard_error) << ',' << p.runs << "\n";
  }
  return out.str();
}

nlohmann::json to_json(const MessageMap& map) {
  auto entries = nlohmann::json::array();
  for (const auto& e : map.entries) entries.push_back({{"x", e.cell.x}, {"y", e.cell.y}, {"messages", e.messages}});
  return {{"kind", "message_map"},
          {"layout", map.layout},
          {"senders", map.senders},
          {"vocab", map.vocab},
          {"distinct_messages", distinct_messages(map)},
          {"entries", entries}};
}

nlohmann::json to_json(const FlowMap& flow) {
  auto arrows = nlohmann::json::array();
  for (int i = 0; i < kCellCount; ++i) {
    const auto& a = flow.arrows[static_cast<std::size_t>(i)];
    if (!a) continue;
    const Position p = cell_position(i);
    arrows.push_back({{"x", p.x}, {"y", p.y}, {"action", action_name(*a)}});
  }
  auto trajectory = nlohmann::json::array();
  for (const Position p : flow.trajectory) trajectory.push_back({p.x, p.y});
  return {{"kind", "flow_map"},
          {"layout", flow.layout},
          {"message", flow.message},
          {"arrows", arrows},
          {"trajectory", trajectory},
          {"cycle_entry", {flow.cycle_entry.x, flow.cycle_entry.y}}};
}

nlohmann::json to_json(const DominanceReport& report) {
  auto drops = nlohmann::json::array();
  for (const auto& d : report.drops) {
    drops.push_back({{"sender", d.sender},
                     {"scrambled_return", d.scrambled_return},
                     {"scrambled_ci", {d.scrambled_ci.low, d.scrambled_ci.high}},
                     {"drop_percent", d.drop_percent},
                     {"drop_ci", {d.drop_ci.low, d.drop_ci.high}}});
  }
  return {{"kind", "dominance"},
          {"episodes", report.episodes},
          {"baseline_return", report.baseline_return},
          {"baseline_ci", {report.baseline_ci.low, report.baseline_ci.high}},
          {"drops", drops}};
}

nlohmann::json to_json(const CompositionReport& report) {
  auto senders = nlohmann::json::array();
  for (const auto& s : report.senders) {
    senders.push_back({{"sender", s.sender},
                       {"regions", s.regions},
                       {"entropy_bits", s.entropy_bits},
                       {"x_alignment", s.x_alignment},
                       {"y_alignment", s.y_alignment}});
  }
  auto pairs = nlohmann::json::array();
  for (const auto& p : report.pairs) {
    pairs.push_back({{"first", p.first}, {"second", p.second}, {"mutual_information_bits", p.mutual_information_bits}});
  }
  return {{"kind", "composition"},
          {"note", "alignment and mutual-information scores are tool-defined partition metrics"},
          {"layout", report.layout},
          {"senders", senders},
          {"pairs", pairs}};
}

nlohmann::json to_json(std::span<const CapacityCurvePoint> points) {
  auto out = nlohmann::json::array();
  for (const auto& p : points) {
    out.push_back({{"layout", p.layout},
                   {"capacity", p.capacity},
                   {"mean_normalized_return", p.mean_normalized_return},
                   {"standard_error", p.standard_error},
                   {"runs", p.runs}});
  }
  return {{"kind", "capacity_curve"}, {"points", out}};
}

}  // namespace emcomm
