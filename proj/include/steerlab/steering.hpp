#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "steerlab/equilibrium.hpp"
#include "steerlab/game.hpp"
#include "steerlab/principal_noregret.hpp"
#include "steerlab/protocol.hpp"
#include "steerlab/rng.hpp"

namespace steerlab {

// Configuration of a full steering run: spend the opening rounds learning
// agent utilities with the phased gradient-descent learner, solve for an
// optimal approximate correlated equilibrium with payments on the estimates,
// then spend the remaining rounds recommending actions from it with an
// obedience bonus.
struct SteeringConfig {
  long total_rounds = 0;         // T, the whole horizon
  long phase_length = 0;         // L; 0 resolves to ceil(T^{3/4})
  double rho = 0.0;              // strictness bonus; 0 resolves to T^{-1/4}
  double epsilon_cap = 0.25;     // ceiling on the measured learning precision
  double penalty_payment = 2.0;  // paid to an obedient agent when others stray

  long resolved_phase_length() const;
  double resolved_rho() const;

  // Throws std::invalid_argument when the learning stage would not fit:
  // resolved L times the number of learning phases must stay below T.
  void validate(const std::vector<int>& action_counts) const;
};

struct StageTotals {
  long rounds = 0;
  double utility_sum = 0.0;  // principal utility, summed over rounds
  double payment_sum = 0.0;  // payments across all agents, summed over rounds
  double objective_sum() const { return utility_sum - payment_sum; }
};

// Running principal-objective bookkeeping, split by stage. Everything here
// is a function of the round records alone, so evaluate_objective rebuilds
// it bit-exactly from a transcript.
struct ObjectiveLedger {
  StageTotals learning;
  StageTotals steering;
  long disobedient_rounds = 0;  // steering rounds where someone ignored s^t
  std::vector<long> disobedient_rounds_per_agent;

  long total_rounds() const { return learning.rounds + steering.rounds; }
  double objective_sum() const {
    return learning.objective_sum() + steering.objective_sum();
  }
  // F(T): average of principal utility minus total payments over all rounds.
  double average_objective() const {
    const long rounds = total_rounds();
    return rounds > 0 ? objective_sum() / static_cast<double>(rounds) : 0.0;
  }
};

// Folds one round into the ledger. steer() uses this online and
// evaluate_objective uses it in replay, which is what makes the two agree
// bit-for-bit.
void ledger_add_round(ObjectiveLedger& ledger, const RoundRecord& record);

ObjectiveLedger evaluate_objective(const std::vector<RoundRecord>& records);

// The three-stage principal. Stage boundaries are internal: callers run it
// through run_protocol like any other principal.
//
// Stage 1 (rounds 0 .. L*sum_i M_i - 1): phased gradient-descent utility
// learning, bottom signals for the learner and pin signals elsewhere.
// Stage 2 (between rounds): measure the strategic distance eps of the
// estimates against the true game (capped by config.epsilon_cap), then solve
// the 2eps-CEP linear program on the estimated game.
// Stage 3 (remaining rounds): draw s^t from the solution's distribution,
// send Recommend(s_i^t) signals, and pay agent i
//     P*_i(s,s) + 2 eps + rho   if the realized profile equals s^t,
//     penalty_payment           if agent i obeyed but someone else did not,
//     0                         if agent i itself deviated.
//
// Each steering round the drawn recommendation is also checked against the
// true game: if some agent could gain more than the rho margin by deviating
// while others obey, the round is flagged (diagnostic, not fatal; the
// obedience bonus covers estimation error only up to 2 eps).
class SteeringPrincipal : public Principal {
 public:
  SteeringPrincipal(const NormalFormGame& game, Eigen::VectorXd principal_utility,
                    SteeringConfig config, std::uint64_t seed);

  RoundPlan plan_round(long t) override;
  void observe(long t, const std::vector<int>& actions) override;
  bool finished() const override { return round_ >= config_.total_rounds; }

  long learning_rounds() const { return learning_rounds_; }

  // Valid once the run has passed the learning stage.
  const CepSolution& cep() const;
  const LearnedUtilities& learned() const;
  double epsilon_used() const;
  long dominance_flagged_rounds() const { return dominance_flagged_rounds_; }
  long dominance_violations() const { return dominance_violations_; }

 private:
  void enter_steering_stage();
  void check_dominance(std::int64_t recommended);

  NormalFormGame game_;  // true game, used for simulation-side measurement
  Eigen::VectorXd principal_utility_;
  SteeringConfig config_;
  double rho_;
  MultiAgentGdPrincipal learner_;
  long learning_rounds_;
  long round_ = 0;

  bool steering_ready_ = false;
  CepSolution cep_;
  LearnedUtilities learned_;
  double epsilon_used_ = 0.0;
  CounterRng recommend_rng_;
  std::vector<int> recommendation_;
  std::int64_t recommendation_index_ = -1;

  long dominance_flagged_rounds_ = 0;
  long dominance_violations_ = 0;
};

struct SteeringOutcome {
  ObjectiveLedger ledger;
  CepSolution cep;
  LearnedUtilities learned;
  double epsilon_used = 0.0;
  long dominance_flagged_rounds = 0;
  long dominance_violations = 0;
};

// Runs the full steering protocol against the given agents. Round records
// are forwarded to `sink` when provided (the ledger is maintained either
// way). The seed drives only the recommendation draws.
SteeringOutcome steer(const std::vector<Agent*>& agents, const NormalFormGame& game,
                      const Eigen::VectorXd& principal_utility,
                      const SteeringConfig& config, std::uint64_t seed,
                      RoundSink* sink = nullptr);

}  // namespace steerlab
