#pragma once

// Gridworld layouts, episode dynamics, observation encodings and exact
// graph oracles for the cooperative navigation task.

#include <array>
#include <bitset>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emcomm/rng.hpp"

namespace emcomm {

inline constexpr int kGridSize = 5;
inline constexpr int kCellCount = kGridSize * kGridSize;
inline constexpr int kMaxSenders = 5;
inline constexpr int kNavActionCount = 4;

struct Position {
  int x = 0;  // column
  int y = 0;  // row, 0 is the top

  auto operator<=>(const Position&) const = default;
};

inline constexpr Position kCenter{2, 2};

bool in_bounds(Position p);

/// Row-major flattening: y * 5 + x.
int cell_index(Position p);
Position cell_position(int index);

enum class NavAction : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr std::array<NavAction, kNavActionCount> kNavActions{
    NavAction::Up, NavAction::Down, NavAction::Left, NavAction::Right};

Position apply_move(Position p, NavAction a);
char action_glyph(NavAction a);
std::string_view action_name(NavAction a);

class Layout {
 public:
  Layout() = default;

  /// Validates the grid invariants: start is free, has a free neighbour, and
  /// every free cell is reachable from it. Registered names must also
  /// reproduce their registered shortest-path count and cover size.
  Layout(std::string name, std::bitset<kCellCount> walls, Position start);

  const std::string& name() const { return name_; }
  int width() const { return kGridSize; }
  int height() const { return kGridSize; }
  Position start() const { return start_; }
  const std::bitset<kCellCount>& walls() const { return walls_; }

  bool is_wall(Position p) const { return walls_.test(static_cast<std::size_t>(cell_index(p))); }
  /// False for walls and out-of-bounds positions.
  bool is_free(Position p) const { return in_bounds(p) && !is_wall(p); }

  /// Free cells in row-major order.
  std::vector<Position> free_cells() const;
  /// Free cells other than the start, in row-major order.
  std::vector<Position> goal_candidates() const;

 private:
  std::string name_;
  std::bitset<kCellCount> walls_;
  Position start_{kCenter};
};

struct LayoutRegistration {
  std::string_view name;
  std::string_view text;
  std::uint64_t shortest_path_count;
  int min_cover_size;
};

const std::vector<LayoutRegistration>& registered_layouts();
std::vector<std::string> layout_names();

/// One of empty_room, pong, two_room, four_room, flower.
Layout make_layout(std::string_view name);

/// Parses the text layout format: 5 lines of 5 characters,
/// '#' wall, '.' free, 'S' start.
Layout parse_layout(std::string_view text, std::string name = "custom");
Layout load_layout_file(const std::filesystem::path& path);
std::string render_layout(const Layout& layout);

struct MessageSeq {
  std::vector<int> symbols;
  int vocab = 0;

  int senders() const { return static_cast<int>(symbols.size()); }
};

/// Throws UsageError unless 1 <= M <= 5, N >= 1 and every symbol is < N.
void validate_messages(const MessageSeq& messages);

struct EpisodeState {
  Position position;
  Position goal;
  std::optional<MessageSeq> messages;
  int t = 0;
  bool done = false;
  bool goal_reached = false;
};

EpisodeState reset(const Layout& layout, Rng& rng);

/// Moves the receiver one cell. Moving into a wall or off the grid leaves the
/// position unchanged. Reaching the goal ends the episode with reward 1 before
/// the termination draw; otherwise the episode ends with probability p_term.
int step(const Layout& layout, EpisodeState& state, NavAction action, Rng& rng, double p_term);

std::vector<double> encode_sender_context(const Layout& layout, Position goal);

/// Position one-hot (25) followed by one N-wide one-hot block per sender.
std::vector<double> encode_receiver_observation(Position position, const MessageSeq& messages);
int receiver_observation_size(int senders, int vocab);

// ---- graph oracles ----

inline constexpr int kUnreachable = -1;
using CellDistances = std::array<int, kCellCount>;

/// BFS distances from the start; walls and unreachable cells hold kUnreachable.
CellDistances shortest_distances(const Layout& layout);

/// Number of distinct shortest paths from the start to each cell (0 for walls).
std::array<std::uint64_t, kCellCount> shortest_path_counts(const Layout& layout);

/// Sum of shortest_path_counts over all goal candidates.
std::uint64_t count_shortest_paths(const Layout& layout);

struct PathCover {
  int size = 0;
  std::vector<std::vector<Position>> paths;  // each starts at the start cell
};

/// Exact minimum number of shortest paths from the start whose union covers
/// every goal candidate.
PathCover min_shortest_path_cover(const Layout& layout);

/// Expected return of a shortest-path policy averaged over goal placements:
/// mean of gamma^(d(g) - 1).
double theoretical_max_return(const Layout& layout, double gamma);

}  // namespace emcomm
