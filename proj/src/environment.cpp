#include "emcomm/environment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "emcomm/errors.hpp"

namespace emcomm {

namespace {

// Wall sets reproduce the registered path counts and cover sizes; the
// oracle values are the contract, not exact pixel coordinates.
const std::vector<LayoutRegistration> kRegistry = {
    {"empty_room",
     ".....\n"
     ".....\n"
     "..S..\n"
     ".....\n"
     ".....\n",
     64, 8},
    {"pong",
     "#...#\n"
     "#.#.#\n"
     "#.S.#\n"
     "#.#.#\n"
     "#...#\n",
     14, 4},
    {"two_room",
     "..#..\n"
     "..#..\n"
     "..S..\n"
     "..#..\n"
     "..#..\n",
     32, 8},
    {"four_room",
     "..#..\n"
     "..#..\n"
     "#.S.#\n"
     "..#..\n"
     "..#..\n",
     22, 8},
    {"flower",
     "..#..\n"
     ".....\n"
     "#.S.#\n"
     ".....\n"
     "..#..\n",
     44, 8},
};

const LayoutRegistration* find_registration(std::string_view name) {
  for (const auto& reg : kRegistry) {
    if (reg.name == name) return &reg;
  }
  return nullptr;
}

std::vector<Position> free_neighbours(const Layout& layout, Position p) {
  std::vector<Position> out;
  out.reserve(4);
  for (const NavAction a : kNavActions) {
    const Position q = apply_move(p, a);
    if (q != p && layout.is_free(q)) out.push_back(q);
  }
  return out;
}

// Cells in BFS order from the start.
std::vector<Position> bfs_order(const Layout& layout, const CellDistances& dist) {
  std::vector<Position> order;
  for (const Position p : layout.free_cells()) {
    if (dist[cell_index(p)] != kUnreachable) order.push_back(p);
  }
  std::stable_sort(order.begin(), order.end(), [&](Position a, Position b) {
    return dist[cell_index(a)] < dist[cell_index(b)];
  });
  return order;
}

using CellMask = std::uint32_t;

struct CoverSearch {
  std::vector<CellMask> sets;
  CellMask target = 0;
  int best = 0;
  std::vector<int> chosen;
  std::vector<int> best_chosen;

  void run(CellMask covered) {
    if (covered == target) {
      if (static_cast<int>(chosen.size()) < best) {
        best = static_cast<int>(chosen.size());
        best_chosen = chosen;
      }
      return;
    }
    if (static_cast<int>(chosen.size()) + 1 >= best) return;

    // Branch on the uncovered cell with the fewest covering paths.
    const CellMask uncovered = target & ~covered;
    int branch_cell = -1;
    std::size_t branch_options = 0;
    for (int cell = 0; cell < kCellCount; ++cell) {
      if (!(uncovered >> cell & 1U)) continue;
      std::size_t options = 0;
      for (const CellMask s : sets) options += (s >> cell) & 1U;
      if (branch_cell < 0 || options < branch_options) {
        branch_cell = cell;
        branch_options = options;
      }
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
      if (!(sets[i] >> branch_cell & 1U)) continue;
      chosen.push_back(static_cast<int>(i));
      run(covered | sets[i]);
      chosen.pop_back();
    }
  }
};

}  // namespace

bool in_bounds(Position p) { return p.x >= 0 && p.x < kGridSize && p.y >= 0 && p.y < kGridSize; }

int cell_index(Position p) {
  if (!in_bounds(p)) {
    throw UsageError("position (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                     ") is outside the grid");
  }
  return p.y * kGridSize + p.x;
}

Position cell_position(int index) {
  if (index < 0 || index >= kCellCount) {
    throw UsageError("cell index " + std::to_string(index) + " is outside the grid");
  }
  return {index % kGridSize, index / kGridSize};
}

Position apply_move(Position p, NavAction a) {
  switch (a) {
    case NavAction::Up: return {p.x, p.y - 1};
    case NavAction::Down: return {p.x, p.y + 1};
    case NavAction::Left: return {p.x - 1, p.y};
    case NavAction::Right: return {p.x + 1, p.y};
  }
  return p;
}

char action_glyph(NavAction a) {
  switch (a) {
    case NavAction::Up: return '^';
    case NavAction::Down: return 'v';
    case NavAction::Left: return '<';
    case NavAction::Right: return '>';
  }
  return '?';
}

std::string_view action_name(NavAction a) {
  switch (a) {
    case NavAction::Up: return "up";
    case NavAction::Down: return "down";
    case NavAction::Left: return "left";
    case NavAction::Right: return "right";
  }
  return "?";
}

Layout::Layout(std::string name, std::bitset<kCellCount> walls, Position start)
    : name_(std::move(name)), walls_(walls), start_(start) {
  if (!in_bounds(start_)) throw ConfigError("layout '" + name_ + "': start is outside the grid");
  if (is_wall(start_)) throw ConfigError("layout '" + name_ + "': start cell is a wall");
  if (free_neighbours(*this, start_).empty()) {
    throw ConfigError("layout '" + name_ + "': start has no free neighbour");
  }
  const CellDistances dist = shortest_distances(*this);
  for (const Position p : free_cells()) {
    if (dist[cell_index(p)] == kUnreachable) {
      throw ConfigError("layout '" + name_ + "': cell (" + std::to_string(p.x) + "," +
                        std::to_string(p.y) + ") is unreachable from the start");
    }
  }
  if (const auto* reg = find_registration(name_)) {
    if (start_ != kCenter) {
      throw ConfigError("layout '" + name_ + "': registered layouts start at (2,2)");
    }
    const std::uint64_t count = count_shortest_paths(*this);
    if (count != reg->shortest_path_count) {
      throw ConfigError("layout '" + name_ + "': shortest-path count " + std::to_string(count) +
                        " does not match registered value " +
                        std::to_string(reg->shortest_path_count));
    }
    const int cover = min_shortest_path_cover(*this).size;
    if (cover != reg->min_cover_size) {
      throw ConfigError("layout '" + name_ + "': path cover size " + std::to_string(cover) +
                        " does not match registered value " + std::to_string(reg->min_cover_size));
    }
  }
}

std::vector<Position> Layout::free_cells() const {
  std::vector<Position> out;
  for (int i = 0; i < kCellCount; ++i) {
    if (!walls_.test(static_cast<std::size_t>(i))) out.push_back(cell_position(i));
  }
  return out;
}

std::vector<Position> Layout::goal_candidates() const {
  std::vector<Position> out = free_cells();
  std::erase(out, start_);
  return out;
}

const std::vector<LayoutRegistration>& registered_layouts() { return kRegistry; }

std::vector<std::string> layout_names() {
  std::vector<std::string> names;
  for (const auto& reg : kRegistry) names.emplace_back(reg.name);
  return names;
}

Layout make_layout(std::string_view name) {
  const auto* reg = find_registration(name);
  if (reg == nullptr) {
    throw ConfigError("unknown layout '" + std::string(name) +
                      "' (expected empty_room, pong, two_room, four_room or flower)");
  }
  return parse_layout(reg->text, std::string(name));
}

Layout parse_layout(std::string_view text, std::string name) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.size() != kGridSize) {
    throw ConfigError("layout '" + name + "': expected 5 rows, found " +
                      std::to_string(rows.size()));
  }
  std::bitset<kCellCount> walls;
  std::optional<Position> start;
  for (int y = 0; y < kGridSize; ++y) {
    const std::string& row = rows[static_cast<std::size_t>(y)];
    if (row.size() != kGridSize) {
      throw ConfigError("layout '" + name + "': row " + std::to_string(y) +
                        " must have 5 characters");
    }
    for (int x = 0; x < kGridSize; ++x) {
      switch (row[static_cast<std::size_t>(x)]) {
        case '#': walls.set(static_cast<std::size_t>(cell_index({x, y}))); break;
        case '.': break;
        case 'S':
          if (start) throw ConfigError("layout '" + name + "': more than one start cell");
          start = Position{x, y};
          break;
        default:
          throw ConfigError("layout '" + name + "': unexpected character '" +
                            std::string(1, row[static_cast<std::size_t>(x)]) + "'");
      }
    }
  }
  if (!start) throw ConfigError("layout '" + name + "': no start cell 'S'");
  return Layout(std::move(name), walls, *start);
}

Layout load_layout_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open layout file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string name = path.stem().string();
  // A file named after a registered layout must match its registration.
  return parse_layout(buffer.str(), find_registration(name) ? name : "custom:" + name);
}

std::string render_layout(const Layout& layout) {
  std::string out;
  for (int y = 0; y < kGridSize; ++y) {
    for (int x = 0; x < kGridSize; ++x) {
      const Position p{x, y};
      out += p == layout.start() ? 'S' : layout.is_wall(p) ? '#' : '.';
    }
    out += '\n';
  }
  return out;
}

void validate_messages(const MessageSeq& messages) {
  if (messages.senders() < 1 || messages.senders() > kMaxSenders) {
    throw UsageError("message sequence must hold 1..5 symbols, got " +
                     std::to_string(messages.senders()));
  }
  if (messages.vocab < 1) throw UsageError("message vocabulary must be positive");
  for (const int s : messages.symbols) {
    if (s < 0 || s >= messages.vocab) {
      throw UsageError("message symbol " + std::to_string(s) + " outside vocabulary of size " +
                       std::to_string(messages.vocab));
    }
  }
}

EpisodeState reset(const Layout& layout, Rng& rng) {
  const std::vector<Position> candidates = layout.goal_candidates();
  EpisodeState state;
  state.position = layout.start();
  state.goal = candidates[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(candidates.size())))];
  return state;
}

int step(const Layout& layout, EpisodeState& state, NavAction action, Rng& rng, double p_term) {
  if (state.done) throw UsageError("step called on a finished episode");
  const Position next = apply_move(state.position, action);
  if (layout.is_free(next)) state.position = next;
  ++state.t;
  if (state.position == state.goal) {
    state.done = true;
    state.goal_reached = true;
    return 1;
  }
  if (rng.bernoulli(p_term)) state.done = true;
  return 0;
}

std::vector<double> encode_sender_context(const Layout& layout, Position goal) {
  if (!layout.is_free(goal)) {
    throw UsageError("goal (" + std::to_string(goal.x) + "," + std::to_string(goal.y) +
                     ") is a wall or outside the grid");
  }
  std::vector<double> context(kCellCount, 0.0);
  context[static_cast<std::size_t>(cell_index(goal))] = 1.0;
  return context;
}

int receiver_observation_size(int senders, int vocab) { return kCellCount + senders * vocab; }

std::vector<double> encode_receiver_observation(Position position, const MessageSeq& messages) {
  validate_messages(messages);
  std::vector<double> obs(static_cast<std::size_t>(receiver_observation_size(messages.senders(), messages.vocab)), 0.0);
  obs[static_cast<std::size_t>(cell_index(position))] = 1.0;
  for (int i = 0; i < messages.senders(); ++i) {
    obs[static_cast<std::size_t>(kCellCount + i * messages.vocab + messages.symbols[static_cast<std::size_t>(i)])] = 1.0;
  }
  return obs;
}

CellDistances shortest_distances(const Layout& layout) {
  CellDistances dist;
  dist.fill(kUnreachable);
  std::deque<Position> queue{layout.start()};
  dist[cell_index(layout.start())] = 0;
  while (!queue.empty()) {
    const Position p = queue.front();
    queue.pop_front();
    for (const Position q : free_neighbours(layout, p)) {
      int& d = dist[cell_index(q)];
      if (d == kUnreachable) {
        d = dist[cell_index(p)] + 1;
        queue.push_back(q);
      }
    }
  }
  return dist;
}

std::array<std::uint64_t, kCellCount> shortest_path_counts(const Layout& layout) {
  const CellDistances dist = shortest_distances(layout);
  std::array<std::uint64_t, kCellCount> counts{};
  counts[cell_index(layout.start())] = 1;
  for (const Position p : bfs_order(layout, dist)) {
    if (p == layout.start()) continue;
    std::uint64_t total = 0;
    for (const Position q : free_neighbours(layout, p)) {
      if (dist[cell_index(q)] == dist[cell_index(p)] - 1) total += counts[cell_index(q)];
    }
    counts[cell_index(p)] = total;
  }
  return counts;
}

std::uint64_t count_shortest_paths(const Layout& layout) {
  const auto counts = shortest_path_counts(layout);
  std::uint64_t total = 0;
  for (const Position g : layout.goal_candidates()) total += counts[cell_index(g)];
  return total;
}

PathCover min_shortest_path_cover(const Layout& layout) {
  const CellDistances dist = shortest_distances(layout);
  const int start = cell_index(layout.start());

  // Every shortest path from the start, as (cell mask, cell sequence).
  std::vector<std::vector<std::vector<int>>> paths_to(kCellCount);
  paths_to[static_cast<std::size_t>(start)] = {{start}};
  for (const Position p : bfs_order(layout, dist)) {
    const int cell = cell_index(p);
    if (cell == start) continue;
    for (const Position q : free_neighbours(layout, p)) {
      if (dist[cell_index(q)] != dist[cell] - 1) continue;
      for (const auto& prefix : paths_to[static_cast<std::size_t>(cell_index(q))]) {
        auto path = prefix;
        path.push_back(cell);
        paths_to[static_cast<std::size_t>(cell)].push_back(std::move(path));
      }
    }
  }

  std::vector<std::pair<CellMask, std::vector<int>>> candidates;
  for (const auto& paths : paths_to) {
    for (const auto& path : paths) {
      if (path.size() < 2) continue;
      CellMask mask = 0;
      for (const int c : path) {
        if (c != start) mask |= CellMask{1} << c;
      }
      candidates.emplace_back(mask, path);
    }
  }
  // Only maximal paths matter: any path contained in another is dominated.
  std::vector<std::pair<CellMask, std::vector<int>>> maximal;
  for (const auto& [mask, path] : candidates) {
    const bool dominated = std::any_of(candidates.begin(), candidates.end(), [&](const auto& other) {
      return other.first != mask && (other.first & mask) == mask;
    });
    const bool duplicate = std::any_of(maximal.begin(), maximal.end(),
                                       [&](const auto& kept) { return kept.first == mask; });
    if (!dominated && !duplicate) maximal.emplace_back(mask, path);
  }

  CoverSearch search;
  for (const Position g : layout.goal_candidates()) search.target |= CellMask{1} << cell_index(g);
  for (const auto& entry : maximal) search.sets.push_back(entry.first);
  search.best = static_cast<int>(search.sets.size()) + 1;
  search.run(0);

  PathCover cover;
  cover.size = search.best;
  for (const int i : search.best_chosen) {
    std::vector<Position> path;
    for (const int c : maximal[static_cast<std::size_t>(i)].second) path.push_back(cell_position(c));
    cover.paths.push_back(std::move(path));
  }
  return cover;
}

double theoretical_max_return(const Layout& layout, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("gamma must lie in (0, 1)");
  const CellDistances dist = shortest_distances(layout);
  const std::vector<Position> goals = layout.goal_candidates();
  double total = 0.0;
  for (const Position g : goals) total += std::pow(gamma, dist[cell_index(g)] - 1);
  return total / static_cast<double>(goals.size());
}

}  // namespace emcomm
