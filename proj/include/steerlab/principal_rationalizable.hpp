#pragma once

#include <vector>

#include <Eigen/Dense>

#include "steerlab/game.hpp"
#include "steerlab/protocol.hpp"

namespace steerlab {

// Output of the payment-query learning algorithms. Estimates recover each
// agent's payoffs up to a per-opponent-profile offset; epsilon is the
// accuracy target the run was configured with, total_payment the realized
// payments actually handed out.
struct LearnResult {
  LearnedUtilities estimates;
  long rounds_used = 0;
  double total_payment = 0.0;
  // Escalation principal only: payment steps taken per action (k such that
  // the agent switched at payment k * eps; 0 for the baseline action).
  std::vector<long> escalation_steps;
};

// Number of probes the bisection principals spend per (action, opponent
// profile) pair: ceil(log2(1/eps)) + 1, which shrinks the final bracket to
// at most eps/2.
int bisection_probes(double eps);

// Learns a single rationalizable agent's utilities by bisecting, for every
// action a, over the bonus payment P on a that makes the agent switch to a.
// The bracket starts at [0, 1]; a round paying mid on a where the agent
// plays a proves the switch threshold is at most mid, otherwise at least
// mid. The upper end of the final bracket is the estimate, so the reported
// utility is u_tilde(a) = -hi_a (switch thresholds are gaps to the best
// action, negated so better actions get larger estimates).
class SingleAgentBisectionPrincipal : public Principal {
 public:
  SingleAgentBisectionPrincipal(int num_actions, double eps);

  RoundPlan plan_round(long t) override;
  void observe(long t, const std::vector<int>& actions) override;
  bool finished() const override { return action_ >= m_; }
  LearnResult result() const;

 private:
  int m_;
  double eps_;
  int probes_;
  int action_ = 0;
  int probe_ = 0;
  double lo_ = 0.0;
  double hi_ = 1.0;
  double mid_ = 0.5;
  std::vector<double> switch_payment_;
  long rounds_ = 0;
  double paid_ = 0.0;
};

// Multi-agent version: sweeps agents in index order and, per agent, the
// opponents' joint actions in lexicographic order. During a sweep the other
// agents are pinned with a payment of 2 on the target action (strictly
// dominant for any payoffs in [0, 1]), and the free agent's switch payments
// are bisected exactly as in the single-agent case. A pinned agent that
// deviates anyway is reported as a protocol violation, since no conforming
// agent can.
class MultiAgentBisectionPrincipal : public Principal {
 public:
  MultiAgentBisectionPrincipal(std::vector<int> action_counts, double eps);

  RoundPlan plan_round(long t) override;
  void observe(long t, const std::vector<int>& actions) override;
  bool finished() const override { return agent_ >= n_; }
  LearnResult result() const;

 private:
  void advance();

  std::vector<int> counts_;
  int n_;
  double eps_;
  int probes_;
  int agent_ = 0;
  std::int64_t opp_ = 0;
  int action_ = 0;
  int probe_ = 0;
  double lo_ = 0.0;
  double hi_ = 1.0;
  double mid_ = 0.5;
  std::vector<OpponentIndexer> indexers_;
  std::vector<Eigen::VectorXd> estimates_;
  long rounds_ = 0;
  double paid_ = 0.0;
};

// Payment-minimizing single-agent learner. Round one pays nothing and reads
// off a baseline best action a*. Then for every other action a, in index
// order, the payment on a escalates through 0, eps, 2*eps, ... until the
// agent plays a; the step count k pins the gap to (k-1)*eps < gap <= k*eps
// and the estimate is u_tilde(a) = -k*eps. Realized payments are only ever
// paid on the switch round, so the total stays within sum_a gap(a) + m*eps.
// An agent that resists a payment above 1 + eps is nonconforming and is
// reported as a protocol violation.
class MinPaymentPrincipal : public Principal {
 public:
  MinPaymentPrincipal(int num_actions, double eps);

  RoundPlan plan_round(long t) override;
  void observe(long t, const std::vector<int>& actions) override;
  bool finished() const override { return phase_ == Phase::Done; }
  LearnResult result() const;
  int baseline_action() const { return baseline_; }

 private:
  enum class Phase { Discover, Escalate, Done };
  void advance_target();

  int m_;
  double eps_;
  Phase phase_ = Phase::Discover;
  int baseline_ = -1;
  int target_ = -1;
  long step_ = 0;
  std::vector<long> steps_;
  long rounds_ = 0;
  double paid_ = 0.0;
};

// Convenience drivers: run the principal against the given agents to
// completion (no transcript) and return the result.
LearnResult learn_single_agent_optimal(Agent& agent, const NormalFormGame& game,
                                       double eps);
LearnResult learn_multi_agent_rationalizable(const std::vector<Agent*>& agents,
                                             const NormalFormGame& game, double eps);
LearnResult learn_single_agent_min_payment(Agent& agent, const NormalFormGame& game,
                                           double eps);

}  // namespace steerlab
