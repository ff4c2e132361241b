#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "steerlab/game.hpp"
#include "steerlab/protocol.hpp"
#include "steerlab/rng.hpp"

namespace steerlab {

// Multiplicative-weights strategy from a cumulative utility vector:
// x_a proportional to exp(eta * cumulative_a), computed with max subtraction
// so large cumulative sums never overflow. eta = 0 yields uniform.
Eigen::VectorXd mwu_strategy(const Eigen::VectorXd& cumulative, double eta);

// Learning state an agent keeps for one signal value. The ledger tracks, per
// candidate action a, the cumulative gap sum_tau (u_tau[a] - u_tau[played]);
// its max entry is the realized regret for this signal, and peak_regret is
// the running maximum of that over time (the anytime reading).
struct SignalLearner {
  Eigen::VectorXd cumulative;
  Eigen::VectorXd ledger;
  long rounds = 0;
  double peak_regret = 0.0;
  CounterRng rng;
};

// No-regret agent: an independent multiplicative-weights learner per signal
// value, all sharing the step size eta = sqrt(log(m) / horizon). Payments
// enter only through the observed utility vectors, so the current round's
// offer is ignored at decision time. Sampling for signal s draws from the
// counter stream (seed, "agent<id>/<s>"), which makes replay independent of
// how rounds interleave across signals.
class MwuAgent : public Agent {
 public:
  MwuAgent(int agent_id, int num_actions, long horizon, std::uint64_t seed);

  int act(const Signal& signal, const std::vector<Eigen::VectorXd>& offers,
          long t) override;
  void update(const Signal& signal, const Eigen::VectorXd& total_utilities,
              int played) override;

  double eta() const { return eta_; }
  int num_actions() const { return num_actions_; }
  // Strategy the agent would play right now for this signal.
  Eigen::VectorXd strategy(const Signal& signal) const;
  const SignalLearner* learner(const Signal& signal) const;
  // Signals in first-use order (deterministic across runs).
  const std::vector<Signal>& seen_signals() const { return order_; }
  double max_peak_regret() const;

 private:
  SignalLearner& learner_for(const Signal& signal);

  int agent_id_;
  int num_actions_;
  long horizon_;
  std::uint64_t seed_;
  double eta_;
  std::unordered_map<Signal, SignalLearner, SignalHash> table_;
  std::vector<Signal> order_;
};

// Iterated elimination of strictly dominated actions, mixed dominators
// included. An action a of agent i is eliminated when some mixture x over
// i's other surviving actions satisfies
//
//   min over surviving opponent profiles of (U_i(x, a_-i) - U_i(a, a_-i)) > 1e-9,
//
// decided by a small feasibility LP per candidate. Elimination repeats until
// a full pass removes nothing. Returns the surviving action indices per
// agent, ascending.
std::vector<std::vector<int>> rationalizable_set(const NormalFormGame& game);

// Same computation with an explicit scan order (used to check that the
// surviving sets do not depend on elimination order).
struct ScanOrder {
  std::vector<int> agents;                   // permutation of agent indices
  std::vector<std::vector<int>> actions;     // per agent, permutation of actions
};
std::vector<std::vector<int>> rationalizable_set(const NormalFormGame& game,
                                                 const ScanOrder& order);

// How a rationalizable agent resolves the latitude the model leaves it.
//   GreedyUniform:   best response to independent uniform play over every
//                    other agent's surviving set, lowest index on ties.
//   AdversarialMax:  highest-index surviving action.
//   AdversarialMin:  lowest-index surviving action.
enum class TiePolicy { GreedyUniform, AdversarialMax, AdversarialMin };

const char* to_string(TiePolicy policy);
TiePolicy tie_policy_from_string(const std::string& s);

// One round of play for the rationalizable model: compute the surviving sets
// of the payment-augmented game and pick per the policy. Always lands inside
// the surviving set.
int rationalizable_agent_act(const NormalFormGame& augmented_game, int agent,
                             TiePolicy policy);

// Protocol adapter. Holds the base game; each round it augments with the
// public offers and re-derives its play. Memoryless, so update is a no-op.
class RationalizableAgent : public Agent {
 public:
  RationalizableAgent(const NormalFormGame& base_game, int agent_id, TiePolicy policy)
      : base_game_(&base_game), agent_id_(agent_id), policy_(policy) {}

  int act(const Signal& signal, const std::vector<Eigen::VectorXd>& offers,
          long t) override;
  void update(const Signal&, const Eigen::VectorXd&, int) override {}

 private:
  const NormalFormGame* base_game_;
  int agent_id_;
  TiePolicy policy_;
};

}  // namespace steerlab
