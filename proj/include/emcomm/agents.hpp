#pragma once

// Sender (contextual bandit over messages) and receiver (Q-learning over
// navigation actions) agents.

#include <span>
#include <vector>

#include "emcomm/environment.hpp"
#include "emcomm/nn.hpp"
#include "emcomm/rng.hpp"

namespace emcomm {

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

struct SenderAgent {
  DenseNet net;  // single linear layer, 25 -> vocab
  RmsProp optimizer;
  int vocab = 0;
  double epsilon = 0.0;
};

SenderAgent make_sender(int vocab, double epsilon, const RmsPropConfig& opt, Rng& rng, double init_scale);

/// Greedy selection never touches the random stream.
int sender_act(const SenderAgent& agent, std::span<const double> context, Rng& rng, bool greedy);

/// Squared error between the episode return and Q(context, message). The
/// gradient flows only into the selected message's output.
double sender_update(SenderAgent& agent, std::span<const double> context, int message, double episode_return);

/// Same update for sender `sender_index` of a finished episode; R is 1 iff the goal was reached.
double sender_update(SenderAgent& agent, const Layout& layout, const EpisodeState& episode, int sender_index);

struct ReceiverAgent {
  DenseNet net;  // obs -> 4 action values
  RmsProp optimizer;
  double gamma = 0.8;
  double epsilon = 0.0;
  ForwardCache cache;
};

/// hidden == 0 gives a linear (tabular for one-hot inputs) receiver.
ReceiverAgent make_receiver(int input_dim, int hidden, double gamma, double epsilon, const RmsPropConfig& opt,
                            Rng& rng, double init_scale);

NavAction receiver_act(const ReceiverAgent& agent, std::span<const double> obs, Rng& rng, bool greedy);

struct Transition {
  std::vector<double> obs;
  NavAction action = NavAction::Up;
  int reward = 0;
  std::vector<double> next_obs;
  bool terminal = false;
};

/// Semi-gradient TD(0) update. Terminal transitions (goal or random
/// termination) use the reward alone as target; next_obs is then ignored.
double receiver_update(ReceiverAgent& agent, const Transition& tr);

}  // namespace emcomm
