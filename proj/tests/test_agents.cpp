#include "doctest.h"

#include <cmath>

#include "emcomm/agents.hpp"
#include "emcomm/errors.hpp"

using namespace emcomm;

namespace {

RmsPropConfig batch(int size, double lr = 1e-3) { return RmsPropConfig{lr, 0.9, 1e-8, size}; }

std::vector<double> one_hot(int size, int index) {
  std::vector<double> v(static_cast<std::size_t>(size), 0.0);
  v[static_cast<std::size_t>(index)] = 1.0;
  return v;
}

// Linear receiver whose outputs are the given constants (bias only).
ReceiverAgent constant_receiver(int input_dim, std::array<double, 4> q, double gamma = 0.8) {
  Rng rng(1);
  ReceiverAgent agent = make_receiver(input_dim, 0, gamma, 0.0, batch(10), rng, 0.0);
  agent.net.layers()[0].bias.assign(q.begin(), q.end());
  return agent;
}

}  // namespace

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax(std::vector<double>{0.0, 0.0, 0.0}) == 0);
  CHECK(argmax(std::vector<double>{0.1, 0.9, 0.2, 0.3}) == 1);
  CHECK(argmax(std::vector<double>{1.0, 2.0, 2.0}) == 1);
  CHECK_THROWS_AS(argmax(std::vector<double>{}), UsageError);
}

TEST_CASE("argmax is invariant to a constant shift") {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(5);
    for (auto& x : v) x = std::round(rng.uniform(-3.0, 3.0));
    std::vector<double> shifted = v;
    for (auto& x : shifted) x += 0.5;
    CHECK(argmax(v) == argmax(shifted));
  }
}

TEST_CASE("sender construction") {
  Rng rng(1);
  const SenderAgent s = make_sender(16, 0.1, batch(10), rng, 0.05);
  CHECK(s.net.input_dim() == 25);
  CHECK(s.net.output_dim() == 16);
  CHECK(s.net.layers().size() == 1);
  CHECK(s.net.parameter_count() == 16 * 25 + 16);
  CHECK_THROWS_AS(make_sender(1, 0.1, batch(10), rng, 0.05), ConfigError);
  CHECK_THROWS_AS(make_sender(4, 1.5, batch(10), rng, 0.05), ConfigError);
}

TEST_CASE("sender action selection") {
  Rng rng(2);
  SenderAgent zero = make_sender(4, 0.0, batch(10), rng, 0.0);
  const auto ctx = one_hot(25, 7);
  CHECK(sender_act(zero, ctx, rng, true) == 0);
  CHECK(sender_act(zero, ctx, rng, false) == 0);

  SenderAgent s = make_sender(4, 0.0, batch(10), rng, 0.0);
  s.net.layers()[0].bias = {0.0, 0.0, 0.5, 0.1};
  for (int i = 0; i < 100; ++i) CHECK(sender_act(s, ctx, rng, false) == 2);

  SUBCASE("greedy selection consumes no randomness") {
    Rng a(5);
    Rng b(5);
    s.epsilon = 1.0;
    sender_act(s, ctx, a, true);
    CHECK(a.next() == b.next());
  }
  SUBCASE("epsilon 1 is uniform within three standard deviations") {
    s.epsilon = 1.0;
    constexpr int kDraws = 100000;
    std::array<int, 4> counts{};
    for (int i = 0; i < kDraws; ++i) ++counts[static_cast<std::size_t>(sender_act(s, ctx, rng, false))];
    const double sd = std::sqrt(kDraws * 0.25 * 0.75);
    for (const int c : counts) CHECK(std::abs(c - kDraws * 0.25) <= 3 * sd);
  }
}

TEST_CASE("sender loss and gradient") {
  Rng rng(4);
  SenderAgent s = make_sender(5, 0.0, batch(10), rng, 0.0);
  const auto ctx = one_hot(25, 12);

  SUBCASE("loss value") {
    s.net.layers()[0].bias[3] = 0.3;
    CHECK(sender_update(s, ctx, 3, 1.0) == doctest::Approx(0.49).epsilon(1e-12));
    CHECK(s.optimizer.pending().layers[0].bias[3] == doctest::Approx(2 * (0.3 - 1.0)).epsilon(1e-12));
  }
  SUBCASE("zero error gives zero gradient") {
    s.net.layers()[0].bias[1] = 1.0;
    CHECK(sender_update(s, ctx, 1, 1.0) == 0.0);
    CHECK(s.optimizer.pending().max_abs() == 0.0);
  }
  SUBCASE("gradient support is the selected row, hot column and selected bias") {
    Rng r(9);
    for (int trial = 0; trial < 50; ++trial) {
      SenderAgent agent = make_sender(6, 0.0, batch(10), r, 0.2);
      const int cell = r.uniform_int(25);
      const int message = r.uniform_int(6);
      sender_update(agent, one_hot(25, cell), message, r.bernoulli(0.5) ? 1.0 : 0.0);
      const auto& g = agent.optimizer.pending().layers[0];
      for (int o = 0; o < 6; ++o) {
        for (int i = 0; i < 25; ++i) {
          const double v = g.weights[static_cast<std::size_t>(o * 25 + i)];
          if (o != message || i != cell) CHECK(v == 0.0);
          else CHECK(v != 0.0);
        }
        if (o != message) CHECK(g.bias[static_cast<std::size_t>(o)] == 0.0);
      }
    }
  }
  SUBCASE("out-of-vocabulary message") { CHECK_THROWS_AS(sender_update(s, ctx, 5, 1.0), UsageError); }
}

TEST_CASE("sender update from an episode is only defined at its end") {
  Rng rng(4);
  SenderAgent s = make_sender(4, 0.0, batch(10), rng, 0.0);
  const Layout layout = make_layout("empty_room");
  EpisodeState ep;
  ep.goal = {0, 0};
  ep.messages = MessageSeq{{2}, 4};
  CHECK_THROWS_AS(sender_update(s, layout, ep, 0), UsageError);
  ep.done = true;
  ep.goal_reached = true;
  CHECK(sender_update(s, layout, ep, 0) == doctest::Approx(1.0));
  CHECK(s.optimizer.pending().layers[0].bias[2] == doctest::Approx(-2.0));
  CHECK(s.optimizer.pending().layers[0].weights[2 * 25 + 0] == doctest::Approx(-2.0));
  CHECK_THROWS_AS(sender_update(s, layout, ep, 1), UsageError);
}

TEST_CASE("receiver construction") {
  Rng rng(1);
  const ReceiverAgent r = make_receiver(29, 64, 0.8, 0.1, batch(10), rng, 0.05);
  CHECK(r.net.dims() == std::vector<int>{29, 64, 4});
  CHECK_THROWS_AS(make_receiver(29, 64, 1.0, 0.1, batch(10), rng, 0.05), ConfigError);
  CHECK_THROWS_AS(make_receiver(29, 64, 0.0, 0.1, batch(10), rng, 0.05), ConfigError);
  CHECK_THROWS_AS(make_receiver(29, 64, 0.8, -0.1, batch(10), rng, 0.05), ConfigError);
}

TEST_CASE("receiver action selection") {
  const auto obs = one_hot(29, 12);
  Rng rng(7);
  CHECK(receiver_act(constant_receiver(29, {0.1, 0.9, 0.2, 0.3}), obs, rng, false) == NavAction::Down);
  CHECK(receiver_act(constant_receiver(29, {0.0, 0.0, 0.0, 0.0}), obs, rng, true) == NavAction::Up);
  CHECK(receiver_act(constant_receiver(29, {0.0, 0.5, 0.5, 0.5}), obs, rng, true) == NavAction::Down);
  CHECK(receiver_act(constant_receiver(29, {0.0, 0.0, 0.5, 0.5}), obs, rng, true) == NavAction::Left);

  ReceiverAgent r = constant_receiver(29, {0.1, 0.9, 0.2, 0.3});
  r.epsilon = 1.0;
  constexpr int kDraws = 100000;
  std::array<int, 4> counts{};
  for (int i = 0; i < kDraws; ++i) ++counts[static_cast<std::size_t>(receiver_act(r, obs, rng, false))];
  const double sd = std::sqrt(kDraws * 0.25 * 0.75);
  for (const int c : counts) CHECK(std::abs(c - kDraws * 0.25) <= 3 * sd);
}

TEST_CASE("receiver TD loss") {
  const auto obs = one_hot(29, 12);
  const auto next = one_hot(29, 7);

  SUBCASE("terminal success") {
    ReceiverAgent r = constant_receiver(29, {0.4, 0.0, 0.0, 0.0});
    CHECK(receiver_update(r, Transition{obs, NavAction::Up, 1, next, true}) == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(r.optimizer.pending().layers[0].bias[0] == doctest::Approx(2 * (0.4 - 1.0)).epsilon(1e-12));
    CHECK(r.optimizer.pending().layers[0].bias[1] == 0.0);
  }
  SUBCASE("non-terminal bootstraps through the max") {
    // Bias-only net: Q(next) = Q(obs) = bias, so max next Q is 0.5 and Q(Up) = 0.4.
    ReceiverAgent r = constant_receiver(29, {0.4, 0.5, 0.1, 0.0});
    CHECK(receiver_update(r, Transition{obs, NavAction::Up, 0, next, false}) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("random termination targets zero") {
    ReceiverAgent r = constant_receiver(29, {0.4, 0.5, 0.1, 0.0});
    CHECK(receiver_update(r, Transition{obs, NavAction::Down, 0, next, true}) == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("terminal updates ignore next_obs") {
    Rng rng(3);
    ReceiverAgent a = make_receiver(29, 16, 0.8, 0.0, batch(10), rng, 0.3);
    ReceiverAgent b = a;
    const double la = receiver_update(a, Transition{obs, NavAction::Left, 0, next, true});
    const double lb = receiver_update(b, Transition{obs, NavAction::Left, 0, one_hot(29, 3), true});
    const double lc = receiver_update(b, Transition{obs, NavAction::Left, 0, {}, true});
    CHECK(la == lb);
    CHECK(lb == lc);
  }
  SUBCASE("malformed transitions") {
    ReceiverAgent r = constant_receiver(29, {0.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(receiver_update(r, Transition{one_hot(28, 1), NavAction::Up, 0, next, true}), UsageError);
    CHECK_THROWS_AS(receiver_update(r, Transition{obs, NavAction::Up, 1, next, false}), UsageError);
    CHECK_THROWS_AS(receiver_update(r, Transition{obs, NavAction::Up, 2, next, true}), UsageError);
    CHECK_THROWS_AS(receiver_update(r, Transition{obs, NavAction::Up, 0, {}, false}), UsageError);
  }
}

TEST_CASE("tabular receiver learns a shortest path to a fixed goal") {
  const Layout layout = make_layout("empty_room");
  const MessageSeq msg{{0}, 2};
  Rng rng(21);
  ReceiverAgent r = make_receiver(receiver_observation_size(1, 2), 0, 0.8, 0.2, batch(10, 0.01), rng, 0.0);
  for (int episode = 0; episode < 20000; ++episode) {
    EpisodeState s;
    s.position = layout.start();
    s.goal = {4, 2};
    s.messages = msg;
    while (!s.done) {
      const auto obs = encode_receiver_observation(s.position, msg);
      const NavAction a = receiver_act(r, obs, rng, false);
      const int reward = step(layout, s, a, rng, 0.2);
      receiver_update(r, Transition{obs, a, reward, encode_receiver_observation(s.position, msg), s.done});
    }
  }
  EpisodeState s;
  s.position = layout.start();
  s.goal = {4, 2};
  int steps = 0;
  while (!s.done && steps < 10) {
    step(layout, s, receiver_act(r, encode_receiver_observation(s.position, msg), rng, true), rng, 0.0);
    ++steps;
  }
  CHECK(s.goal_reached);
  CHECK(steps == 2);
  // Converged values approach the survival-discounted targets gamma^(d-1).
  const auto q_start = forward(r.net, encode_receiver_observation(layout.start(), msg));
  CHECK(q_start[static_cast<std::size_t>(NavAction::Right)] == doctest::Approx(0.8).epsilon(0.1));
}
