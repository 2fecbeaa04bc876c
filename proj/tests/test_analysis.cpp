#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "emcomm/analysis.hpp"
#include "emcomm/errors.hpp"

using namespace emcomm;

namespace {

ExperimentConfig quick_config(int senders, int vocab, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.senders = senders;
  c.vocab = vocab;
  c.lr_sender = 0.01;
  c.epsilon_sender = c.epsilon_receiver = 0.05;
  c.total_steps = 200000;
  c.seed = seed;
  return c;
}

AgentSet zero_agents(int senders, int vocab, const std::string& layout = "empty_room") {
  ExperimentConfig c;
  c.layout = layout;
  c.senders = senders;
  c.vocab = vocab;
  c.init_scale = 0.0;
  Rng rng(1);
  return make_agents(c, rng);
}

MessageMap synthetic_map(const Layout& layout, int senders, int vocab, auto label) {
  MessageMap map;
  map.layout = layout.name();
  map.senders = senders;
  map.vocab = vocab;
  for (const Position p : layout.goal_candidates()) map.entries.push_back({p, label(p)});
  return map;
}

}  // namespace

TEST_CASE("untrained probes follow the tie-break rule") {
  const Layout layout = make_layout("empty_room");
  const AgentSet agents = zero_agents(1, 4);
  const MessageMap map = probe_message_map(agents, layout);
  CHECK(map.entries.size() == 24);
  for (const auto& e : map.entries) CHECK(e.messages == std::vector<int>{0});
  CHECK(distinct_messages(map) == 1);
  CHECK(message_region(map, {0}).size() == 24);
  CHECK(message_region(map, {1}).empty());

  const FlowMap flow = probe_flow_map(agents, {2}, layout);
  for (const Position p : layout.free_cells()) {
    REQUIRE(flow.arrows[static_cast<std::size_t>(cell_index(p))].has_value());
    CHECK(*flow.arrows[static_cast<std::size_t>(cell_index(p))] == NavAction::Up);
  }
  CHECK(flow.trajectory == std::vector<Position>{{2, 2}, {2, 1}, {2, 0}});
  CHECK(flow.cycle_entry == Position{2, 0});
}

TEST_CASE("probes are total and deterministic on a trained checkpoint") {
  for (const char* name : {"empty_room", "four_room"}) {
    ExperimentConfig c = quick_config(2, 3);
    c.layout = name;
    c.total_steps = 50000;
    const RunRecord r = train(c);
    const Layout layout = make_layout(name);
    const MessageMap a = probe_message_map(r.agents, layout);
    const MessageMap b = probe_message_map(r.agents, layout);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(a.entries.size() == layout.goal_candidates().size());
    for (const auto& e : a.entries) {
      REQUIRE(e.messages.size() == 2);
      for (const int m : e.messages) CHECK((m >= 0 && m < 3));
    }
    for (const int m0 : {0, 1, 2}) {
      for (const int m1 : {0, 1, 2}) {
        const FlowMap f = probe_flow_map(r.agents, {m0, m1}, layout);
        CHECK(to_json(f).dump() == to_json(probe_flow_map(r.agents, {m0, m1}, layout)).dump());
        for (int i = 0; i < kCellCount; ++i) {
          CHECK(f.arrows[static_cast<std::size_t>(i)].has_value() == layout.is_free(cell_position(i)));
        }
        CHECK(f.trajectory.size() <= 25);
        CHECK(f.trajectory.front() == layout.start());
        std::set<Position> unique(f.trajectory.begin(), f.trajectory.end());
        CHECK(unique.size() == f.trajectory.size());
        CHECK(unique.count(f.cycle_entry) == 1);
      }
    }
    const std::string ascii = render_message_map(a, layout);
    CHECK(ascii == render_message_map(b, layout));
  }
}

TEST_CASE("probe errors") {
  const Layout layout = make_layout("empty_room");
  const AgentSet agents = zero_agents(1, 4);
  CHECK_THROWS_AS(probe_message_map(agents, make_layout("pong")), UsageError);
  CHECK_THROWS_AS(probe_flow_map(agents, {4}, layout), UsageError);
  CHECK_THROWS_AS(probe_flow_map(agents, {0, 1}, layout), UsageError);
  ExperimentConfig c;
  c.mode = RunMode::RandomMessages;
  Rng rng(1);
  CHECK_THROWS_AS(probe_message_map(make_agents(c, rng), layout), UsageError);
  const MessageMap map = probe_message_map(agents, layout);
  CHECK_THROWS_AS(map.at(kCenter), UsageError);
}

TEST_CASE("ASCII renders") {
  const Layout pong = make_layout("pong");
  const MessageMap map = synthetic_map(pong, 1, 12, [](Position p) { return std::vector<int>{p.x + p.y + 3}; });
  const std::string ascii = render_message_map(map, pong);
  CHECK(ascii ==
        "#456#\n"
        "#5#7#\n"
        "#6 8#\n"
        "#7#9#\n"
        "#89a#\n");

  const MessageMap wide = synthetic_map(make_layout("empty_room"), 1, 25, [](Position p) {
    return std::vector<int>{cell_index(p) == 24 ? 24 : cell_index(p) % 12};
  });
  const std::string lines = render_message_map(wide, make_layout("empty_room"));
  CHECK(lines.substr(0, 6) == "01234\n");
  CHECK(lines[2 * 6 + 2] == ' ');
  CHECK(lines[4 * 6 + 4] == 'o');

  const AgentSet agents = zero_agents(1, 4, "pong");
  const FlowMap flow = probe_flow_map(agents, {0}, pong);
  const std::string flow_ascii = render_flow_map(flow, pong);
  CHECK(flow_ascii.substr(0, 30) ==
        "#^^^#\n"
        "#^#^#\n"
        "#^ ^#\n"
        "#^#^#\n"
        "#^^^#\n");
}

TEST_CASE("message map CSV has one row per goal cell") {
  const Layout layout = make_layout("flower");
  const MessageMap map = synthetic_map(layout, 2, 2, [](Position p) { return std::vector<int>{p.x < 2, p.y < 2}; });
  const std::string csv = message_map_csv(map);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(layout.goal_candidates().size()) + 1);
  CHECK(csv.rfind("x,y,cell,sender_0,sender_1\n", 0) == 0);
}

TEST_CASE("Hamiltonian sweep detection") {
  FlowMap flow;
  flow.trajectory = {{2, 2}, {2, 1}, {1, 1}, {1, 2}};
  const std::vector<Position> region{{2, 1}, {1, 1}, {1, 2}};
  CHECK(is_hamiltonian_over(flow, region));
  const std::vector<Position> wider{{2, 1}, {1, 1}, {0, 0}};
  CHECK_FALSE(is_hamiltonian_over(flow, wider));
}

TEST_CASE("capacity curve pooling") {
  std::vector<CapacitySample> samples = {
      {"empty_room", 1, 16, 0.9}, {"empty_room", 2, 4, 0.8}, {"empty_room", 4, 2, 0.7},
      {"empty_room", 1, 3, 0.5},  {"pong", 1, 16, 0.1},      {"empty_room", 1, 9, std::nan("")},
  };
  std::vector<std::string> warnings;
  const auto curve = sweep_capacity_curve(samples, "empty_room", &warnings);
  REQUIRE(curve.size() == 2);
  CHECK(curve[0].capacity == 3);
  CHECK(curve[0].runs == 1);
  CHECK(curve[0].mean_normalized_return == 0.5);
  CHECK(curve[0].standard_error == 0.0);
  CHECK(curve[1].capacity == 16);
  CHECK(curve[1].runs == 3);
  CHECK(curve[1].mean_normalized_return == doctest::Approx(0.8));
  CHECK(curve[1].standard_error == doctest::Approx(0.1 / std::sqrt(3.0)));
  CHECK(warnings.size() == 2);
  CHECK(sweep_capacity_curve(samples, "flower", &warnings).empty());
  CHECK(capacity_curve_csv(curve).find("16,") != std::string::npos);
}

TEST_CASE("pearson correlation") {
  const std::vector<double> xs{1, 2, 3, 4, 5};
  const std::vector<double> ys{2, 1, 4, 3, 5};
  // Hand evaluation: means 3 and 3, sxy = 8, sxx = syy = 10, so r = 0.8.
  const Correlation c = correlate(xs, ys);
  CHECK(std::abs(c.r - 0.8) <= 1e-12);
  CHECK(c.n == 5);
  // t = 0.8 * sqrt(3 / 0.36) = 2.3094; two-sided p with 3 dof.
  CHECK(c.p_value == doctest::Approx(0.104088).epsilon(1e-4));

  CHECK(correlate(xs, xs).r == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> neg{-1, -2, -3, -4, -5};
  CHECK(correlate(xs, neg).r == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(correlate(xs, neg).p_value == 0.0);
  CHECK_THROWS_AS(correlate(xs, std::vector<double>{1, 1, 1, 1, 1}), UndefinedCorrelation);
  CHECK_THROWS_AS(correlate(std::vector<double>{1, 2}, std::vector<double>{1, 2}), UsageError);
  CHECK_THROWS_AS(correlate(xs, std::vector<double>{1, 2, 3}), UsageError);
}

TEST_CASE("structure measure orders the layouts") {
  const double pong = structure_measure(make_layout("pong"));
  const double four = structure_measure(make_layout("four_room"));
  const double two = structure_measure(make_layout("two_room"));
  const double flower = structure_measure(make_layout("flower"));
  const double empty = structure_measure(make_layout("empty_room"));
  CHECK(pong == doctest::Approx(1.0 / 14));
  CHECK(empty == doctest::Approx(1.0 / 64));
  CHECK(pong > four);
  CHECK(four > two);
  CHECK(two > flower);
  CHECK(flower > empty);
}

TEST_CASE("bootstrap interval brackets the mean") {
  Rng rng(5);
  std::vector<int> values;
  for (int i = 0; i < 1000; ++i) values.push_back(i % 4 == 0 ? 1 : 0);
  const Interval ci = bootstrap_mean_ci(values, 2000, rng);
  CHECK(ci.low < 0.25);
  CHECK(ci.high > 0.25);
  // Normal approximation half-width 1.96 * sqrt(0.25 * 0.75 / 1000) = 0.0268.
  CHECK(ci.high - ci.low == doctest::Approx(2 * 0.0268).epsilon(0.15));
  const std::vector<int> constant(50, 1);
  const Interval flat = bootstrap_mean_ci(constant, 100, rng);
  CHECK(flat.low == 1.0);
  CHECK(flat.high == 1.0);
}

TEST_CASE("dominance report") {
  const Layout layout = make_layout("empty_room");
  ExperimentConfig c = quick_config(5, 2);
  c.total_steps = 100000;
  RunRecord r = train(c);

  SUBCASE("requires five senders unless overridden") {
    const RunRecord one = train(quick_config(1, 4));
    CHECK_THROWS_AS(dominance_scramble(one.agents, layout, 100, 1), UsageError);
    CHECK_NOTHROW(dominance_scramble(one.agents, layout, 100, 1, true));
  }
  SUBCASE("sorted, reproducible and bounded by the baseline") {
    const DominanceReport a = dominance_scramble(r.agents, layout, 300, 7);
    const DominanceReport b = dominance_scramble(r.agents, layout, 300, 7);
    CHECK(to_json(a).dump() == to_json(b).dump());
    REQUIRE(a.drops.size() == 5);
    std::set<int> senders;
    for (std::size_t i = 0; i < a.drops.size(); ++i) {
      senders.insert(a.drops[i].sender);
      if (i > 0) CHECK(a.drops[i].drop_percent <= a.drops[i - 1].drop_percent);
      CHECK(a.drops[i].drop_ci.low <= a.drops[i].drop_percent);
      CHECK(a.drops[i].drop_ci.high >= a.drops[i].drop_percent);
      CHECK(a.baseline_return >= a.drops[i].scrambled_return - (a.drops[i].scrambled_ci.high - a.drops[i].scrambled_ci.low));
    }
    CHECK(senders.size() == 5);
    CHECK(dominance_csv(a).find("rank,sender") == 0);
  }
  SUBCASE("an ignored sender shows exactly zero drop") {
    auto& w = r.agents.receiver.net.layers()[0];
    const int block_start = 25 + 3 * 2;
    for (int o = 0; o < w.outputs; ++o) {
      for (int i = block_start; i < block_start + 2; ++i) w.weight(o, i) = 0.0;
    }
    const DominanceReport report = dominance_scramble(r.agents, layout, 300, 9);
    const auto it = std::find_if(report.drops.begin(), report.drops.end(), [](const SenderDrop& d) { return d.sender == 3; });
    REQUIRE(it != report.drops.end());
    CHECK(it->drop_percent == 0.0);
    CHECK(it->scrambled_return == report.baseline_return);
    CHECK(it->drop_ci.low == 0.0);
    CHECK(it->drop_ci.high == 0.0);
  }
}

TEST_CASE("compositional report") {
  const Layout pong = make_layout("pong");
  SUBCASE("orthogonal axis splits") {
    const MessageMap map =
        synthetic_map(pong, 2, 2, [](Position p) { return std::vector<int>{p.x < 2 ? 0 : 1, p.y < 2 ? 0 : 1}; });
    const CompositionReport report = compositional_report(std::span<const MessageMap>(&map, 1), pong);
    REQUIRE(report.senders.size() == 2);
    REQUIRE(report.pairs.size() == 1);
    CHECK(report.senders[0].regions == 2);
    CHECK(report.senders[0].x_alignment == 1.0);
    CHECK(report.senders[1].y_alignment == 1.0);
    CHECK(report.senders[0].y_alignment < 1.0);
    // The x label is independent of the y label over pong's cells up to the
    // shared column x = 2; mutual information stays small.
    CHECK(report.pairs[0].mutual_information_bits < 0.1);
  }
  SUBCASE("identical partitions share their entropy") {
    const Layout empty = make_layout("empty_room");
    const MessageMap a = synthetic_map(empty, 1, 4, [](Position p) { return std::vector<int>{(p.x + 2 * p.y) % 3}; });
    const std::vector<MessageMap> maps{a, a};
    const CompositionReport report = compositional_report(maps, empty);
    CHECK(report.pairs[0].mutual_information_bits == doctest::Approx(report.senders[0].entropy_bits).epsilon(1e-12));
    CHECK(report.senders[0].entropy_bits > 1.0);
  }
  SUBCASE("single-cell regions count as aligned") {
    const Layout empty = make_layout("empty_room");
    const MessageMap map = synthetic_map(empty, 2, 25, [](Position p) { return std::vector<int>{cell_index(p), 0}; });
    const CompositionReport report = compositional_report(std::span<const MessageMap>(&map, 1), empty);
    CHECK(report.senders[0].x_alignment == 1.0);
    CHECK(report.senders[0].y_alignment == 1.0);
    CHECK(report.pairs[0].mutual_information_bits == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("errors") {
    const MessageMap one = synthetic_map(pong, 1, 2, [](Position p) { return std::vector<int>{p.x < 2}; });
    CHECK_THROWS_AS(compositional_report(std::span<const MessageMap>(&one, 1), pong), UsageError);
    const MessageMap other = synthetic_map(make_layout("flower"), 1, 2, [](Position p) { return std::vector<int>{p.x < 2}; });
    const std::vector<MessageMap> mixed{one, other};
    CHECK_THROWS_AS(compositional_report(mixed, pong), UsageError);
  }
}

TEST_CASE("merging messages never helps a trained pair") {
  const Layout layout = make_layout("empty_room");
  for (const std::uint64_t seed : {1, 2, 3}) {
    CAPTURE(seed);
    const RunRecord r = train(quick_config(1, 25, seed));
    const MessageMap map = probe_message_map(r.agents, layout);
    // Merge the two most used messages by redirecting the first into the second.
    std::map<int, int> use;
    for (const auto& e : map.entries) ++use[e.messages[0]];
    if (use.size() < 2) continue;
    std::vector<std::pair<int, int>> ranked;
    for (const auto& [m, n] : use) ranked.emplace_back(n, m);
    std::sort(ranked.rbegin(), ranked.rend());
    const int from = ranked[0].second;
    const int to = ranked[1].second;
    AgentSet merged = r.agents;
    auto& w = merged.sender_agents[0].net.layers()[0];
    for (const auto& e : map.entries) {
      if (e.messages[0] != from) continue;
      const int cell = cell_index(e.cell);
      w.weight(to, cell) = w.weight(from, cell) + w.bias[static_cast<std::size_t>(from)] -
                           w.bias[static_cast<std::size_t>(to)] + 1.0;
    }
    const MessageMap coarse = probe_message_map(merged, layout);
    CHECK(distinct_messages(coarse) == distinct_messages(map) - 1);
    constexpr int kEpisodes = 4000;
    const EvalReport base = evaluate(r.agents, layout, kEpisodes, 21);
    const EvalReport worse = evaluate(merged, layout, kEpisodes, 21);
    CHECK(base.mean_return >= worse.mean_return - 2 * std::sqrt(0.25 / kEpisodes));
  }
}

TEST_CASE("reports serialize to JSON") {
  const Layout layout = make_layout("empty_room");
  const AgentSet agents = zero_agents(1, 4);
  const auto jm = to_json(probe_message_map(agents, layout));
  CHECK(jm.at("entries").size() == 24);
  const auto jf = to_json(probe_flow_map(agents, {1}, layout));
  CHECK(jf.at("trajectory").size() == 3);
  const std::vector<CapacityCurvePoint> points{{4, 0.5, 0.01, 3, "empty_room"}};
  CHECK(to_json(std::span<const CapacityCurvePoint>(points)).at("points").size() == 1);
}
