#include "steerlab/principal_rationalizable.hpp"

#include <cmath>
#include <stdexcept>

namespace steerlab {

int bisection_probes(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) {
    throw std::invalid_argument("bisection: eps must be in (0, 1)");
  }
  return static_cast<int>(std::ceil(std::log2(1.0 / eps) - 1e-12)) + 1;
}

SingleAgentBisectionPrincipal::SingleAgentBisectionPrincipal(int num_actions, double eps)
    : m_(num_actions), eps_(eps), probes_(bisection_probes(eps)) {
  if (num_actions < 1) throw std::invalid_argument("bisection: need at least one action");
  switch_payment_.reserve(m_);
}

RoundPlan SingleAgentBisectionPrincipal::plan_round(long) {
  mid_ = (lo_ + hi_) / 2.0;
  Eigen::VectorXd pay = Eigen::VectorXd::Zero(m_);
  pay(action_) = mid_;
  RoundPlan plan;
  plan.payments = PaymentRule::action_form({pay});
  plan.signals = {Signal::none()};
  return plan;
}

void SingleAgentBisectionPrincipal::observe(long, const std::vector<int>& actions) {
  ++rounds_;
  if (actions[0] == action_) {
    hi_ = mid_;
    paid_ += mid_;
  } else {
    lo_ = mid_;
  }
  if (++probe_ >= probes_) {
    switch_payment_.push_back(hi_);
    ++action_;
    probe_ = 0;
    lo_ = 0.0;
    hi_ = 1.0;
  }
}

LearnResult SingleAgentBisectionPrincipal::result() const {
  LearnResult out;
  Eigen::VectorXd est(m_);
  for (int a = 0; a < m_; ++a) est(a) = -switch_payment_[a];
  out.estimates.values = {est};
  out.estimates.epsilon = eps_;
  out.rounds_used = rounds_;
  out.total_payment = paid_;
  return out;
}

MultiAgentBisectionPrincipal::MultiAgentBisectionPrincipal(std::vector<int> action_counts,
                                                           double eps)
    : counts_(std::move(action_counts)),
      n_(static_cast<int>(counts_.size())),
      eps_(eps),
      probes_(bisection_probes(eps)) {
  std::int64_t total = 1;
  for (int c : counts_) {
    if (c < 1) throw std::invalid_argument("bisection: need at least one action");
    total *= c;
  }
  indexers_.reserve(n_);
  estimates_.reserve(n_);
  for (int i = 0; i < n_; ++i) {
    indexers_.emplace_back(counts_, i);
    estimates_.push_back(Eigen::VectorXd::Zero(total));
  }
}

RoundPlan MultiAgentBisectionPrincipal::plan_round(long) {
  mid_ = (lo_ + hi_) / 2.0;
  const std::vector<int> pinned = indexers_[agent_].profile_with(opp_, action_);
  std::vector<Eigen::VectorXd> pay(n_);
  for (int j = 0; j < n_; ++j) {
    pay[j] = Eigen::VectorXd::Zero(counts_[j]);
    pay[j](pinned[j]) = j == agent_ ? mid_ : 2.0;
  }
  RoundPlan plan;
  plan.payments = PaymentRule::action_form(std::move(pay));
  plan.signals.assign(n_, Signal::none());
  return plan;
}

void MultiAgentBisectionPrincipal::observe(long, const std::vector<int>& actions) {
  ++rounds_;
  const std::vector<int> pinned = indexers_[agent_].profile_with(opp_, action_);
  for (int j = 0; j < n_; ++j) {
    if (j != agent_ && actions[j] != pinned[j]) {
      throw ProtocolViolation("pinned agent " + std::to_string(j) +
                              " deviated from a dominant payment");
    }
    if (j != agent_) paid_ += 2.0;
  }
  if (actions[agent_] == action_) {
    hi_ = mid_;
    paid_ += mid_;
  } else {
    lo_ = mid_;
  }
  if (++probe_ >= probes_) {
    estimates_[agent_](indexers_[agent_].joint_index(opp_, action_)) = -hi_;
    advance();
  }
}

void MultiAgentBisectionPrincipal::advance() {
  probe_ = 0;
  lo_ = 0.0;
  hi_ = 1.0;
  if (++action_ < counts_[agent_]) return;
  action_ = 0;
  if (++opp_ < indexers_[agent_].count()) return;
  opp_ = 0;
  ++agent_;
}

LearnResult MultiAgentBisectionPrincipal::result() const {
  LearnResult out;
  out.estimates.values = estimates_;
  out.estimates.epsilon = eps_;
  out.rounds_used = rounds_;
  out.total_payment = paid_;
  return out;
}

MinPaymentPrincipal::MinPaymentPrincipal(int num_actions, double eps)
    : m_(num_actions), eps_(eps) {
  if (num_actions < 1) throw std::invalid_argument("min-payment: need at least one action");
  if (!(eps > 0.0 && eps < 1.0)) {
    throw std::invalid_argument("min-payment: eps must be in (0, 1)");
  }
  steps_.assign(m_, 0);
}

RoundPlan MinPaymentPrincipal::plan_round(long) {
  Eigen::VectorXd pay = Eigen::VectorXd::Zero(m_);
  if (phase_ == Phase::Escalate) pay(target_) = static_cast<double>(step_) * eps_;
  RoundPlan plan;
  plan.payments = PaymentRule::action_form({pay});
  plan.signals = {Signal::none()};
  return plan;
}

void MinPaymentPrincipal::observe(long, const std::vector<int>& actions) {
  ++rounds_;
  const int played = actions[0];
  if (phase_ == Phase::Discover) {
    baseline_ = played;
    steps_[baseline_] = 0;
    target_ = -1;
    advance_target();
    return;
  }
  if (played == target_) {
    paid_ += static_cast<double>(step_) * eps_;
    steps_[target_] = step_;
    advance_target();
    return;
  }
  ++step_;
  if (static_cast<double>(step_) * eps_ > 1.0 + eps_ + 1e-12) {
    throw ProtocolViolation("agent refused a payment exceeding any possible gap");
  }
}

void MinPaymentPrincipal::advance_target() {
  step_ = 0;
  do {
    ++target_;
  } while (target_ < m_ && target_ == baseline_);
  if (target_ >= m_) phase_ = Phase::Done;
  else phase_ = Phase::Escalate;
}

LearnResult MinPaymentPrincipal::result() const {
  LearnResult out;
  Eigen::VectorXd est(m_);
  for (int a = 0; a < m_; ++a) est(a) = -static_cast<double>(steps_[a]) * eps_;
  out.estimates.values = {est};
  out.estimates.epsilon = eps_;
  out.rounds_used = rounds_;
  out.total_payment = paid_;
  out.escalation_steps = steps_;
  return out;
}

LearnResult learn_single_agent_optimal(Agent& agent, const NormalFormGame& game,
                                       double eps) {
  if (game.num_agents != 1) {
    throw std::invalid_argument("learn_single_agent_optimal: game must have one agent");
  }
  SingleAgentBisectionPrincipal principal(game.action_counts[0], eps);
  std::vector<Agent*> agents = {&agent};
  run_protocol(principal, game, nullptr, agents);
  return principal.result();
}

LearnResult learn_multi_agent_rationalizable(const std::vector<Agent*>& agents,
                                             const NormalFormGame& game, double eps) {
  MultiAgentBisectionPrincipal principal(game.action_counts, eps);
  run_protocol(principal, game, nullptr, agents);
  return principal.result();
}

LearnResult learn_single_agent_min_payment(Agent& agent, const NormalFormGame& game,
                                           double eps) {
  if (game.num_agents != 1) {
    throw std::invalid_argument("learn_single_agent_min_payment: game must have one agent");
  }
  MinPaymentPrincipal principal(game.action_counts[0], eps);
  std::vector<Agent*> agents = {&agent};
  run_protocol(principal, game, nullptr, agents);
  return principal.result();
}

}  // namespace steerlab
