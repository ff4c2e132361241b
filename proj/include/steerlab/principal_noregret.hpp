#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "steerlab/game.hpp"
#include "steerlab/protocol.hpp"

namespace steerlab {

// Euclidean projection onto the payment polytope
//   P = { p in [0,2]^m : sum_i p_i = m },
// computed by bisection on the Lagrange multiplier: p_i = clip(v_i - l, 0, 2)
// with l solved so the sum constraint holds. The sum g(l) is monotone in l,
// so 100 bisection steps to width 1e-12 settle it.
Eigen::VectorXd project_payment(const Eigen::VectorXd& v);

// KKT residual of p as the claimed projection of v: max of the sum-constraint
// gap, box violations, and the distance of p from clip(v - l, 0, 2) for the
// multiplier implied by p. Valid projections stay below 1e-8.
double projection_kkt_residual(const Eigen::VectorXd& v, const Eigen::VectorXd& p);

// Smallest value of sum_a counts[a] * p_a over the payment polytope: the
// benchmark a no-regret payment player is judged against. Closed form: give
// payment 2 to the smallest counts until the budget m is spent.
double best_fixed_payment_cost(const Eigen::VectorXd& counts);

// Diagnostics for one learning phase (Algorithm 4 emits one per (agent,
// opponent-profile) pair; Algorithm 3 is a single phase).
struct PhaseDiagnostics {
  long phase = 0;
  int agent = 0;
  std::int64_t opp_index = 0;
  long rounds = 0;
  long pin_violations = 0;
  // Realized regret of the principal's payment sequence within the phase
  // against the best fixed payment vector in hindsight.
  double principal_regret = 0.0;
};

struct NoRegretLearnResult {
  LearnedUtilities estimates;
  long rounds_used = 0;
  double total_payment = 0.0;
  std::vector<PhaseDiagnostics> phases;
};

// Single-agent utility learner: plays payment vectors from the polytope by
// projected gradient descent against the agent's realized actions,
//   p^1 = all-ones,  p^{t+1} = proj(p^t - eta * e_{a^t}),  eta = sqrt(m/T),
// and reports the centered negative average payment as the utility estimate.
// The payment dynamics form a zero-sum game against the agent, whose
// no-regret play forces the average payment toward 1 - u (up to centering).
class SingleAgentGdPrincipal : public Principal {
 public:
  SingleAgentGdPrincipal(int num_actions, long horizon);

  RoundPlan plan_round(long t) override;
  void observe(long t, const std::vector<int>& actions) override;
  bool finished() const override { return round_ >= horizon_; }
  NoRegretLearnResult result() const;

 private:
  int m_;
  long horizon_;
  double eta_;
  long round_ = 0;
  Eigen::VectorXd p_;
  Eigen::VectorXd sum_p_;
  Eigen::VectorXd action_counts_;
  double paid_on_played_ = 0.0;
  double paid_ = 0.0;
};

// Multi-agent utility learner. One phase per (agent i, opponent profile
// a_{-i}), agents in index order and opponent profiles lexicographic, L
// rounds each. During a phase agent i receives the bottom signal and the
// gradient-descent payments with eta = sqrt(m_i/L); every other agent j is
// pinned: signal Pin(a_j) plus payment 2 on a_j. Pinned no-regret agents may
// stray early; violations are counted per phase, not fatal. Slice estimates
// are the centered negative average payments.
class MultiAgentGdPrincipal : public Principal {
 public:
  MultiAgentGdPrincipal(std::vector<int> action_counts, long phase_length);

  RoundPlan plan_round(long t) override;
  void observe(long t, const std::vector<int>& actions) override;
  bool finished() const override { return agent_ >= n_; }
  NoRegretLearnResult result() const;

  long total_rounds() const;  // L * sum_i M_i

 private:
  void begin_phase();
  void advance_phase();

  std::vector<int> counts_;
  int n_;
  long phase_length_;
  std::vector<OpponentIndexer> indexers_;
  std::vector<Eigen::VectorXd> estimates_;

  int agent_ = 0;
  std::int64_t opp_ = 0;
  long phase_round_ = 0;
  long phase_id_ = 0;
  double eta_ = 0.0;
  Eigen::VectorXd p_;
  Eigen::VectorXd sum_p_;
  Eigen::VectorXd action_counts_in_phase_;
  double paid_on_played_ = 0.0;
  long pin_violations_ = 0;

  long rounds_ = 0;
  double paid_ = 0.0;
  std::vector<PhaseDiagnostics> phases_;
};

// Convenience drivers mirroring the learning interfaces of the
// rationalizable module.
NoRegretLearnResult learn_single_agent_noregret(Agent& agent, const NormalFormGame& game,
                                                long horizon);
NoRegretLearnResult learn_multi_agent_noregret(const std::vector<Agent*>& agents,
                                               const NormalFormGame& game,
                                               long phase_length);

// Default phase length for a target accuracy eps: ceil(K / eps^2) with the
// calibration constant K fixed from acceptance-suite measurements (the
// theory's poly(M) prefactor is unspecified).
long default_phase_length(double eps);

}  // namespace steerlab
