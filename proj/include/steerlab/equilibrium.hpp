#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steerlab/game.hpp"
#include "steerlab/lp.hpp"

namespace steerlab {

// A correlated equilibrium with payments: a joint recommendation
// distribution mu over action profiles plus, per agent, a payment table
// P_i(s, a) indexed by recommended profile s (rows) and realized profile a
// (columns). The solvers below produce payments supported on the diagonal
// (pay only when everyone obeys) or constant in s (signal-independent).
struct CepSolution {
  Eigen::VectorXd mu;                      // over action profiles
  std::vector<Eigen::MatrixXd> payments;   // per agent, |A| x |A|
  double epsilon = 0.0;                    // IC slack the solution targets
  double objective = 0.0;                  // E_mu[U_0] - expected total payment

  double payment(int agent, std::int64_t recommended, std::int64_t realized) const {
    return payments[agent](recommended, realized);
  }
  // Expected payment to one agent under full obedience.
  double expected_payment(int agent) const;
  double expected_total_payment() const;
};

struct CepReport {
  // Per agent: the expected gain of the best deviation map phi_i, i.e. the
  // sum over recommended actions of the best positive single-deviation gain.
  std::vector<double> violation_per_agent;
  double max_violation = 0.0;
  double objective = 0.0;
  double expected_total_payment = 0.0;
  bool passes = false;
};

// Optimal eps-CEP by linear programming. Variables mu(a), Q_i(a_i) (expected
// payment mass on the diagonal), and per-recommendation slacks eps_i(a_i) >= 0
// with per-agent budget sum_{a_i} eps_i(a_i) <= eps. Incentive rows for every
// (agent, recommended action, deviation). Payment mass is bounded by
// Q_i(a_i) <= payment_cap * mu_i(a_i); payment_cap = 0 forces zero payments
// (the plain optimal-correlated-equilibrium problem). Infeasibility is a hard
// error (a product distribution with payment 1 on the diagonal is always
// feasible at cap 1).
CepSolution solve_optimal_cep(const NormalFormGame& game,
                              const Eigen::VectorXd& principal_utility,
                              double epsilon, double payment_cap = 1.0);

// Optimal eps-CEP restricted to payments that ignore the recommendation:
// P_i(s, a) = p_i(a). The products mu(a) * p_i(a') make this bilinear, so it
// is solved exactly by spatial branch-and-bound with McCormick envelopes over
// the box mu in [0,1], p in [0, 4], LP relaxations for bounds, and
// alternating mu-step / p-step polish for incumbents. The returned objective
// is certified within 1e-7 of the restricted optimum.
CepSolution solve_optimal_cep_signal_independent(const NormalFormGame& game,
                                                 const Eigen::VectorXd& principal_utility,
                                                 double epsilon);

// Exhaustive incentive check: for every agent and every recommended action,
// the best single-action deviation gain, aggregated into the best deviation
// map's total gain. Also recomputes the objective from mu and the payment
// diagonal. Passes iff every agent's aggregate gain <= sol.epsilon + 1e-6.
CepReport verify_cep(const NormalFormGame& game,
                     const Eigen::VectorXd& principal_utility,
                     const CepSolution& sol);

// A CEP in non-canonical form: agents receive abstract signals s_i from a
// joint distribution mu over signal profiles, play mixed strategies
// pi_i(a_i | s_i), and are paid P_i(s, a) as a function of the joint signal
// profile and the realized action profile.
struct GeneralCep {
  std::vector<int> signal_counts;          // per agent
  Eigen::VectorXd mu;                      // over joint signal profiles
  std::vector<Eigen::MatrixXd> payments;   // per agent, |S| x |A|
  std::vector<Eigen::MatrixXd> strategies; // per agent, S_i x A_i row-stochastic
  double epsilon = 0.0;
};

std::int64_t signal_profile_count(const GeneralCep& cep);

// Expected principal value of a non-canonical CEP played as specified.
double general_cep_objective(const NormalFormGame& game,
                             const Eigen::VectorXd& principal_utility,
                             const GeneralCep& cep);

// Per-agent best deviation-map gain of a non-canonical CEP, where a deviation
// picks an action per signal (the analogue of verify_cep's aggregate).
std::vector<double> general_cep_violations(const NormalFormGame& game,
                                           const GeneralCep& cep);

// Revelation-principle normal form: push mu forward through the strategies so
// signals become action recommendations, and average the payments over the
// posterior on signal profiles given the recommended profile,
//   mu'(a)      = sum_s mu(s) prod_i pi_i(a_i | s_i)
//   P'_i(a, a') = E_{s ~ mu(.|a)} P_i(s, a'),
// with payment 0 on recommendation profiles of probability zero (never
// drawn). Preserves the objective exactly and never increases the incentive
// violation.
CepSolution canonicalize_cep(const NormalFormGame& game,
                             const Eigen::VectorXd& principal_utility,
                             const GeneralCep& input);

// JSON round-trip. The compact form stores mu, the per-agent payment
// diagonals, epsilon, and objective; tables with off-diagonal mass (the
// signal-independent form) additionally store full rows.
std::string cep_to_json(const CepSolution& sol);
CepSolution cep_from_json(const std::string& text);

}  // namespace steerlab
