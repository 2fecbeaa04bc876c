#pragma once

// Post-hoc probes of trained agents and aggregate statistics over runs.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "emcomm/environment.hpp"
#include "emcomm/training.hpp"

namespace emcomm {

struct MessageMapEntry {
  Position cell;
  std::vector<int> messages;  // one symbol per sender
};

/// Greedy message (tuple) for every goal candidate, in row-major order.
struct MessageMap {
  std::string layout;
  int senders = 0;
  int vocab = 0;
  std::vector<MessageMapEntry> entries;

  const std::vector<int>& at(Position cell) const;
};

MessageMap probe_message_map(const AgentSet& agents, const Layout& layout);

/// Goal cells mapped to exactly this message tuple.
std::vector<Position> message_region(const MessageMap& map, const std::vector<int>& message);

/// Number of distinct message tuples used.
int distinct_messages(const MessageMap& map);

struct FlowMap {
  std::string layout;
  std::vector<int> message;
  std::array<std::optional<NavAction>, kCellCount> arrows;  // empty for walls
  /// Cells visited from the start, in order, up to (excluding) the first repeat.
  std::vector<Position> trajectory;
  /// First cell the trajectory would revisit.
  Position cycle_entry;
};

FlowMap probe_flow_map(const AgentSet& agents, const std::vector<int>& message, const Layout& layout);

/// True when the flow trajectory visits every cell of `region` before revisiting any cell.
bool is_hamiltonian_over(const FlowMap& flow, std::span<const Position> region);

struct CapacitySample {
  std::string layout;
  int senders = 1;
  int vocab = 2;
  double normalized_return = 0.0;
};

struct CapacityCurvePoint {
  std::uint64_t capacity = 0;
  double mean_normalized_return = 0.0;
  double standard_error = 0.0;
  int runs = 0;
  std::string layout;
};

/// Pools samples of one layout by C = N^M, weighting every run equally.
/// Samples from other layouts or with non-finite returns are skipped and noted in `warnings`.
std::vector<CapacityCurvePoint> sweep_capacity_curve(std::span<const CapacitySample> samples, const std::string& layout,
                                                     std::vector<std::string>* warnings = nullptr);

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, Student t with n - 2 degrees of freedom
  int n = 0;
};

Correlation correlate(std::span<const double> xs, std::span<const double> ys);

/// 1 / total shortest-path count. Larger means more constrained.
double structure_measure(const Layout& layout);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bootstrap interval of the mean.
Interval bootstrap_mean_ci(std::span<const int> values, int resamples, Rng& rng, double level = 0.95);

struct SenderDrop {
  int sender = 0;
  double scrambled_return = 0.0;
  Interval scrambled_ci;
  double drop_percent = 0.0;  // (baseline - scrambled) / baseline * 100
  Interval drop_ci;
};

struct DominanceReport {
  int episodes = 0;
  double baseline_return = 0.0;
  Interval baseline_ci;
  std::vector<SenderDrop> drops;  // sorted by drop, largest first
};

inline constexpr int kBootstrapResamples = 10'000;

/// Greedy evaluation with each sender's symbol scrambled in turn. Episodes
/// are paired across conditions, so a sender the receiver ignores shows a
/// drop of exactly zero. Requires five senders unless `allow_any_senders`.
DominanceReport dominance_scramble(const AgentSet& agents, const Layout& layout, int episodes, std::uint64_t seed,
                                   bool allow_any_senders = false);

/// Partition metrics below are defined by this tool, not taken from the literature.
struct SenderPartition {
  int sender = 0;
  int regions = 0;
  double entropy_bits = 0.0;
  /// Fraction of off-axis cells whose region lies wholly on one side of x = 2 (resp. y = 2).
  double x_alignment = 0.0;
  double y_alignment = 0.0;
};

struct PartitionPair {
  int first = 0;
  int second = 0;
  double mutual_information_bits = 0.0;
};

struct CompositionReport {
  std::string layout;
  std::vector<SenderPartition> senders;
  std::vector<PartitionPair> pairs;
};

/// Accepts one multi-sender map or several maps over the same layout; needs at least two senders in total.
CompositionReport compositional_report(std::span<const MessageMap> maps, const Layout& layout);

// ---- rendering ----

/// One 5x5 grid per sender: base-36 symbol per goal cell, '#' walls, blank start.
std::string render_message_map(const MessageMap& map, const Layout& layout);
std::string message_map_csv(const MessageMap& map);
/// Arrow glyph per free cell, '#' walls, blank start; followed by the start action and trajectory.
std::string render_flow_map(const FlowMap& flow, const Layout& layout);
std::string flow_map_csv(const FlowMap& flow);
std::string dominance_csv(const DominanceReport& report);
std::string capacity_curve_csv(std::span<const CapacityCurvePoint> points);

nlohmann::json to_json(const MessageMap& map);
nlohmann::json to_json(const FlowMap& flow);
nlohmann::json to_json(const DominanceReport& report);
nlohmann::json to_json(const CompositionReport& report);
nlohmann::json to_json(std::span<const CapacityCurvePoint> points);

}  // namespace emcomm
