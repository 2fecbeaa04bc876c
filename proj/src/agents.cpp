#include "emcomm/agents.hpp"

#include <array>

#include "emcomm/errors.hpp"

namespace emcomm {

namespace {

int epsilon_greedy(std::span<const double> values, double epsilon, Rng& rng, bool greedy) {
  if (!greedy && rng.uniform() < epsilon) return rng.uniform_int(static_cast<int>(values.size()));
  return argmax(values);
}

}  // namespace

int argmax(std::span<const double> values) {
  if (values.empty()) throw UsageError("argmax of an empty vector");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

SenderAgent make_sender(int vocab, double epsilon, const RmsPropConfig& opt, Rng& rng, double init_scale) {
  if (vocab < 2) throw ConfigError("sender vocabulary must hold at least 2 messages");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("sender epsilon must lie in [0, 1]");
  const std::array<int, 2> dims{kCellCount, vocab};
  SenderAgent agent;
  agent.net = init_net(dims, rng, init_scale);
  agent.optimizer = RmsProp(agent.net, opt);
  agent.vocab = vocab;
  agent.epsilon = epsilon;
  return agent;
}

int sender_act(const SenderAgent& agent, std::span<const double> context, Rng& rng, bool greedy) {
  const std::vector<double> q = forward(agent.net, context);
  return epsilon_greedy(q, agent.epsilon, rng, greedy);
}

double sender_update(SenderAgent& agent, std::span<const double> context, int message, double episode_return) {
  if (message < 0 || message >= agent.vocab) throw UsageError("message outside the sender vocabulary");
  ForwardCache cache;
  const auto q = forward(agent.net, context, cache);
  const double error = q[static_cast<std::size_t>(message)] - episode_return;
  std::vector<double> out_grad(static_cast<std::size_t>(agent.vocab), 0.0);
  out_grad[static_cast<std::size_t>(message)] = 2.0 * error;
  backward_into(agent.net, context, cache, out_grad, agent.optimizer.pending());
  agent.optimizer.commit(agent.net);
  return error * error;
}

double sender_update(SenderAgent& agent, const Layout& layout, const EpisodeState& episode, int sender_index) {
  if (!episode.done) throw UsageError("sender loss is only defined at the end of an episode");
  if (!episode.messages || sender_index < 0 || sender_index >= episode.messages->senders()) {
    throw UsageError("episode carries no message for sender " + std::to_string(sender_index));
  }
  const auto context = encode_sender_context(layout, episode.goal);
  return sender_update(agent, context, episode.messages->symbols[static_cast<std::size_t>(sender_index)],
                       episode.goal_reached ? 1.0 : 0.0);
}

ReceiverAgent make_receiver(int input_dim, int hidden, double gamma, double epsilon, const RmsPropConfig& opt,
                            Rng& rng, double init_scale) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("receiver gamma must lie in (0, 1)");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("receiver epsilon must lie in [0, 1]");
  if (hidden < 0) throw ConfigError("hidden width must be non-negative");
  std::vector<int> dims{input_dim};
  if (hidden > 0) dims.push_back(hidden);
  dims.push_back(kNavActionCount);
  ReceiverAgent agent;
  agent.net = init_net(dims, rng, init_scale);
  agent.optimizer = RmsProp(agent.net, opt);
  agent.gamma = gamma;
  agent.epsilon = epsilon;
  return agent;
}

NavAction receiver_act(const ReceiverAgent& agent, std::span<const double> obs, Rng& rng, bool greedy) {
  const std::vector<double> q = forward(agent.net, obs);
  return kNavActions[static_cast<std::size_t>(epsilon_greedy(q, agent.epsilon, rng, greedy))];
}

double receiver_update(ReceiverAgent& agent, const Transition& tr) {
  const auto input_dim = static_cast<std::size_t>(agent.net.input_dim());
  if (tr.obs.size() != input_dim) throw UsageError("transition observation has the wrong length");
  if (tr.reward != 0 && tr.reward != 1) throw UsageError("transition reward must be 0 or 1");
  if (tr.reward == 1 && !tr.terminal) throw UsageError("a rewarded transition must be terminal");
  if (!tr.terminal && tr.next_obs.size() != input_dim) {
    throw UsageError("transition next observation has the wrong length");
  }

  double target = tr.reward;
  if (!tr.terminal) {
    const std::vector<double> next_q = forward(agent.net, tr.next_obs);
    target += agent.gamma * next_q[static_cast<std::size_t>(argmax(next_q))];
  }
  const auto q = forward(agent.net, tr.obs, agent.cache);
  const auto a = static_cast<std::size_t>(tr.action);
  const double error = q[a] - target;
  std::array<double, kNavActionCount> out_grad{};
  out_grad[a] = 2.0 * error;
  backward_into(agent.net, tr.obs, agent.cache, out_grad, agent.optimizer.pending());
  agent.optimizer.commit(agent.net);
  return error * error;
}

}  // namespace emcomm
