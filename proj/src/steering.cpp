#include "steerlab/steering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steerlab {

long SteeringConfig::resolved_phase_length() const {
  if (phase_length > 0) return phase_length;
  // ceil(T^{3/4}), guarded against pow landing epsilon above an integer.
  return static_cast<long>(
      std::ceil(std::pow(static_cast<double>(total_rounds), 0.75) - 1e-9));
}

double SteeringConfig::resolved_rho() const {
  if (rho > 0.0) return rho;
  return std::pow(static_cast<double>(total_rounds), -0.25);
}

void SteeringConfig::validate(const std::vector<int>& action_counts) const {
  if (total_rounds < 1) {
    throw std::invalid_argument("steering: total_rounds must be positive");
  }
  if (phase_length < 0) {
    throw std::invalid_argument("steering: phase_length must be nonnegative");
  }
  if (rho < 0.0 || epsilon_cap < 0.0 || penalty_payment < 0.0) {
    throw std::invalid_argument("steering: rho, epsilon_cap, penalty_payment must be nonnegative");
  }
  if (action_counts.size() < 1) {
    throw std::invalid_argument("steering: need at least one agent");
  }
  long phases = 0;
  for (std::size_t i = 0; i < action_counts.size(); ++i) {
    if (action_counts[i] < 2) {
      throw std::invalid_argument("steering: every agent needs at least two actions");
    }
    long opponents = 1;
    for (std::size_t j = 0; j < action_counts.size(); ++j) {
      if (j != i) opponents *= action_counts[j];
    }
    phases += opponents;
  }
  const long learning = resolved_phase_length() * phases;
  if (learning >= total_rounds) {
    throw std::invalid_argument(
        "steering: learning stage (" + std::to_string(learning) +
        " rounds) must end before the horizon (" + std::to_string(total_rounds) +
        "); lower phase_length or raise total_rounds");
  }
}

void ledger_add_round(ObjectiveLedger& ledger, const RoundRecord& record) {
  StageTotals& totals = record.stage == 0 ? ledger.learning : ledger.steering;
  totals.rounds += 1;
  totals.utility_sum += record.principal_utility;
  totals.payment_sum += record.realized_payment.sum();
  if (record.stage != 0) {
    if (ledger.disobedient_rounds_per_agent.size() < record.actions.size()) {
      ledger.disobedient_rounds_per_agent.resize(record.actions.size(), 0);
    }
    bool any = false;
    for (std::size_t i = 0; i < record.actions.size(); ++i) {
      const Signal& signal = record.signals[i];
      if (signal.kind == Signal::Kind::Recommend && record.actions[i] != signal.action) {
        ledger.disobedient_rounds_per_agent[i] += 1;
        any = true;
      }
    }
    if (any) ledger.disobedient_rounds += 1;
  }
}

ObjectiveLedger evaluate_objective(const std::vector<RoundRecord>& records) {
  ObjectiveLedger ledger;
  for (const RoundRecord& record : records) ledger_add_round(ledger, record);
  return ledger;
}

SteeringPrincipal::SteeringPrincipal(const NormalFormGame& game,
                                     Eigen::VectorXd principal_utility,
                                     SteeringConfig config, std::uint64_t seed)
    : game_(game),
      principal_utility_(std::move(principal_utility)),
      config_(config),
      rho_(config.resolved_rho()),
      learner_(game.action_counts, config.resolved_phase_length()),
      learning_rounds_(learner_.total_rounds()),
      recommend_rng_(seed, "steering/recommend") {
  game_.validate();
  if (principal_utility_.size() != game_.num_profiles()) {
    throw std::invalid_argument("steering: principal utility needs one entry per profile");
  }
  config_.validate(game_.action_counts);
}

RoundPlan SteeringPrincipal::plan_round(long t) {
  if (round_ < learning_rounds_) {
    RoundPlan plan = learner_.plan_round(t);
    plan.stage = 0;
    return plan;
  }
  if (!steering_ready_) enter_steering_stage();

  recommendation_index_ = recommend_rng_.sample_discrete(cep_.mu);
  recommendation_ = game_.profile_of(recommendation_index_);
  check_dominance(recommendation_index_);

  const int n = game_.num_agents;
  Eigen::VectorXd obedience(n);
  for (int i = 0; i < n; ++i) {
    obedience(i) = cep_.payments[i](recommendation_index_, recommendation_index_) +
                   2.0 * epsilon_used_ + rho_;
  }
  RoundPlan plan;
  plan.stage = 1;
  plan.signals.resize(n);
  for (int i = 0; i < n; ++i) plan.signals[i] = Signal::recommend(recommendation_[i]);
  plan.payments = PaymentRule::recommendation_form(recommendation_, std::move(obedience),
                                                   config_.penalty_payment);
  return plan;
}

void SteeringPrincipal::observe(long t, const std::vector<int>& actions) {
  if (round_ < learning_rounds_) {
    learner_.observe(t, actions);
  }
  ++round_;
}

void SteeringPrincipal::enter_steering_stage() {
  const NoRegretLearnResult result = learner_.result();
  learned_ = result.estimates;
  const DistanceReport distance = strategic_distance(game_, learned_.values);
  epsilon_used_ = std::min(distance.max_distance, config_.epsilon_cap);
  learned_.epsilon = epsilon_used_;

  NormalFormGame estimate = game_;
  estimate.utilities = learned_.values;
  estimate.extended_range = true;
  estimate.range_lo = 0.0;
  estimate.range_hi = 1.0;
  for (const Eigen::VectorXd& values : estimate.utilities) {
    estimate.range_lo = std::min(estimate.range_lo, values.minCoeff());
    estimate.range_hi = std::max(estimate.range_hi, values.maxCoeff());
  }
  cep_ = solve_optimal_cep(estimate, principal_utility_, 2.0 * epsilon_used_);
  steering_ready_ = true;
}

void SteeringPrincipal::check_dominance(std::int64_t recommended) {
  // With others at a_{-i}, obeying pays the bonus when that completes the
  // recommended profile and the penalty rate otherwise; deviating pays 0.
  // Count every (agent, deviation profile) whose margin falls below rho.
  const int n = game_.num_agents;
  long violations = 0;
  for (int i = 0; i < n; ++i) {
    const std::int64_t stride = game_.stride(i);
    const int m = game_.action_counts[i];
    const int rec_own = recommendation_[i];
    const double bonus =
        cep_.payments[i](recommended, recommended) + 2.0 * epsilon_used_ + rho_;
    for (std::int64_t a = 0; a < game_.num_profiles(); ++a) {
      const int own = static_cast<int>((a / stride) % m);
      if (own == rec_own) continue;
      const std::int64_t obeyed = a + (rec_own - own) * stride;
      const double pay = obeyed == recommended ? bonus : config_.penalty_payment;
      const double margin =
          game_.utilities[i](obeyed) + pay - game_.utilities[i](a);
      if (margin < rho_ - 1e-12) ++violations;
    }
  }
  if (violations > 0) {
    ++dominance_flagged_rounds_;
    dominance_violations_ += violations;
  }
}

const CepSolution& SteeringPrincipal::cep() const {
  if (!steering_ready_) throw std::logic_error("steering: no solution before the steering stage");
  return cep_;
}

const LearnedUtilities& SteeringPrincipal::learned() const {
  if (!steering_ready_) throw std::logic_error("steering: no estimates before the steering stage");
  return learned_;
}

double SteeringPrincipal::epsilon_used() const {
  if (!steering_ready_) throw std::logic_error("steering: no estimates before the steering stage");
  return epsilon_used_;
}

namespace {

struct LedgerSink : RoundSink {
  ObjectiveLedger ledger;
  RoundSink* next = nullptr;
  void on_round(const RoundRecord& record) override {
    ledger_add_round(ledger, record);
    if (next) next->on_round(record);
  }
};

}  // namespace

SteeringOutcome steer(const std::vector<Agent*>& agents, const NormalFormGame& game,
                      const Eigen::VectorXd& principal_utility,
                      const SteeringConfig& config, std::uint64_t seed,
                      RoundSink* sink) {
  SteeringPrincipal principal(game, principal_utility, config, seed);
  LedgerSink ledger_sink;
  ledger_sink.next = sink;
  run_protocol(principal, game, &principal_utility, agents, &ledger_sink);

  SteeringOutcome outcome;
  outcome.ledger = std::move(ledger_sink.ledger);
  outcome.cep = principal.cep();
  outcome.learned = principal.learned();
  outcome.epsilon_used = principal.epsilon_used();
  outcome.dominance_flagged_rounds = principal.dominance_flagged_rounds();
  outcome.dominance_violations = principal.dominance_violations();
  return outcome;
}

}  // namespace steerlab
