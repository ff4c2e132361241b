#include "steerlab/principal_noregret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace steerlab {

namespace {

double clip02(double x) { return std::min(2.0, std::max(0.0, x)); }

}  // namespace

Eigen::VectorXd project_payment(const Eigen::VectorXd& v) {
  const Eigen::Index m = v.size();
  if (m < 1 || !v.allFinite()) {
    throw std::invalid_argument("project_payment: need a finite nonempty vector");
  }
  // Feasible points are their own projection; returning them untouched keeps
  // the map exactly idempotent instead of within bisection tolerance.
  if (v.minCoeff() >= 0.0 && v.maxCoeff() <= 2.0 && v.sum() == static_cast<double>(m)) {
    return v;
  }
  // g(l) = sum_i clip(v_i - l, 0, 2) - m is nonincreasing, positive at
  // l = min(v) - 2 (every term clamps to 2, sum 2m >= m) and negative at
  // l = max(v) (every term 0).
  double lo = v.minCoeff() - 2.0;
  double hi = v.maxCoeff();
  const double target = static_cast<double>(m);
  for (int iter = 0; iter < 100 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) sum += clip02(v(i) - mid);
    if (sum >= target) lo = mid;
    else hi = mid;
  }
  const double lambda = 0.5 * (lo + hi);
  Eigen::VectorXd p(m);
  for (Eigen::Index i = 0; i < m; ++i) p(i) = clip02(v(i) - lambda);
  return p;
}

double projection_kkt_residual(const Eigen::VectorXd& v, const Eigen::VectorXd& p) {
  const Eigen::Index m = v.size();
  double residual = std::abs(p.sum() - static_cast<double>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    residual = std::max(residual, -p(i));
    residual = std::max(residual, p(i) - 2.0);
  }
  // Recover the multiplier from interior coordinates when possible;
  // otherwise pick the midpoint of the interval the active bounds allow.
  double lambda = 0.0;
  int interior = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (p(i) > 1e-9 && p(i) < 2.0 - 1e-9) {
      lambda += v(i) - p(i);
      ++interior;
    }
  }
  if (interior > 0) {
    lambda /= interior;
  } else {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (p(i) >= 2.0 - 1e-9) hi = std::min(hi, v(i) - 2.0);
      else lo = std::max(lo, v(i));
    }
    if (!std::isfinite(lo)) lambda = hi;
    else if (!std::isfinite(hi)) lambda = lo;
    else lambda = 0.5 * (lo + hi);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    residual = std::max(residual, std::abs(p(i) - clip02(v(i) - lambda)));
  }
  return residual;
}

double best_fixed_payment_cost(const Eigen::VectorXd& counts) {
  const Eigen::Index m = counts.size();
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (counts(a) != counts(b)) return counts(a) < counts(b);
    return a < b;
  });
  double budget = static_cast<double>(m);
  double cost = 0.0;
  for (int idx : order) {
    const double q = std::min(2.0, budget);
    cost += q * counts(idx);
    budget -= q;
    if (budget <= 0.0) break;
  }
  return cost;
}

namespace {

// Centers x to sum zero: the learning algorithms recover utilities only up
// to a constant per slice, and the reported normalization is mean zero.
Eigen::VectorXd centered(const Eigen::VectorXd& x) {
  return x.array() - x.mean();
}

}  // namespace

SingleAgentGdPrincipal::SingleAgentGdPrincipal(int num_actions, long horizon)
    : m_(num_actions), horizon_(horizon) {
  if (num_actions < 2) {
    throw std::invalid_argument("payment-gd: need at least two actions");
  }
  if (horizon < 1) throw std::invalid_argument("payment-gd: horizon must be positive");
  eta_ = std::sqrt(static_cast<double>(m_) / static_cast<double>(horizon_));
  p_ = Eigen::VectorXd::Ones(m_);
  sum_p_ = Eigen::VectorXd::Zero(m_);
  action_counts_ = Eigen::VectorXd::Zero(m_);
}

RoundPlan SingleAgentGdPrincipal::plan_round(long) {
  RoundPlan plan;
  plan.payments = PaymentRule::action_form({p_});
  plan.signals = {Signal::bot()};
  return plan;
}

void SingleAgentGdPrincipal::observe(long, const std::vector<int>& actions) {
  const int a = actions[0];
  sum_p_ += p_;
  action_counts_(a) += 1.0;
  paid_on_played_ += p_(a);
  paid_ += p_(a);
  p_ = project_payment(p_ - eta_ * Eigen::VectorXd::Unit(m_, a));
  ++round_;
}

NoRegretLearnResult SingleAgentGdPrincipal::result() const {
  NoRegretLearnResult out;
  const Eigen::VectorXd avg = sum_p_ / static_cast<double>(horizon_);
  out.estimates.values = {centered(-avg)};
  out.estimates.epsilon = 0.0;
  out.rounds_used = round_;
  out.total_payment = paid_;
  PhaseDiagnostics phase;
  phase.phase = 0;
  phase.agent = 0;
  phase.opp_index = 0;
  phase.rounds = round_;
  phase.pin_violations = 0;
  phase.principal_regret = paid_on_played_ - best_fixed_payment_cost(action_counts_);
  out.phases = {phase};
  return out;
}

MultiAgentGdPrincipal::MultiAgentGdPrincipal(std::vector<int> action_counts,
                                             long phase_length)
    : counts_(std::move(action_counts)),
      n_(static_cast<int>(counts_.size())),
      phase_length_(phase_length) {
  if (phase_length < 1) throw std::invalid_argument("phased-gd: L must be positive");
  std::int64_t total = 1;
  for (int c : counts_) {
    if (c < 2) throw std::invalid_argument("phased-gd: every agent needs two actions");
    total *= c;
  }
  for (int i = 0; i < n_; ++i) {
    indexers_.emplace_back(counts_, i);
    estimates_.push_back(Eigen::VectorXd::Zero(total));
  }
  begin_phase();
}

long MultiAgentGdPrincipal::total_rounds() const {
  long sum = 0;
  for (int i = 0; i < n_; ++i) sum += static_cast<long>(indexers_[i].count());
  return phase_length_ * sum;
}

void MultiAgentGdPrincipal::begin_phase() {
  const int m = counts_[agent_];
  eta_ = std::sqrt(static_cast<double>(m) / static_cast<double>(phase_length_));
  p_ = Eigen::VectorXd::Ones(m);
  sum_p_ = Eigen::VectorXd::Zero(m);
  action_counts_in_phase_ = Eigen::VectorXd::Zero(m);
  paid_on_played_ = 0.0;
  pin_violations_ = 0;
  phase_round_ = 0;
}

RoundPlan MultiAgentGdPrincipal::plan_round(long) {
  const std::vector<int> pinned = indexers_[agent_].profile_with(opp_, 0);
  std::vector<Eigen::VectorXd> pay(n_);
  RoundPlan plan;
  plan.signals.resize(n_);
  for (int j = 0; j < n_; ++j) {
    if (j == agent_) {
      pay[j] = p_;
      plan.signals[j] = Signal::bot();
    } else {
      pay[j] = Eigen::VectorXd::Zero(counts_[j]);
      pay[j](pinned[j]) = 2.0;
      plan.signals[j] = Signal::pin(pinned[j]);
    }
  }
  plan.payments = PaymentRule::action_form(std::move(pay));
  return plan;
}

void MultiAgentGdPrincipal::observe(long, const std::vector<int>& actions) {
  const std::vector<int> pinned = indexers_[agent_].profile_with(opp_, 0);
  for (int j = 0; j < n_; ++j) {
    if (j == agent_) continue;
    if (actions[j] != pinned[j]) ++pin_violations_;
    else paid_ += 2.0;
  }
  const int a = actions[agent_];
  sum_p_ += p_;
  action_counts_in_phase_(a) += 1.0;
  paid_on_played_ += p_(a);
  paid_ += p_(a);
  p_ = project_payment(p_ - eta_ * Eigen::VectorXd::Unit(counts_[agent_], a));
  ++rounds_;
  if (++phase_round_ >= phase_length_) advance_phase();
}

void MultiAgentGdPrincipal::advance_phase() {
  // Close out the slice: centered negative average payments.
  const Eigen::VectorXd est =
      centered(-(sum_p_ / static_cast<double>(phase_length_)));
  for (int a = 0; a < counts_[agent_]; ++a) {
    estimates_[agent_](indexers_[agent_].joint_index(opp_, a)) = est(a);
  }
  PhaseDiagnostics phase;
  phase.phase = phase_id_++;
  phase.agent = agent_;
  phase.opp_index = opp_;
  phase.rounds = phase_length_;
  phase.pin_violations = pin_violations_;
  phase.principal_regret =
      paid_on_played_ - best_fixed_payment_cost(action_counts_in_phase_);
  phases_.push_back(phase);

  if (++opp_ >= indexers_[agent_].count()) {
    opp_ = 0;
    ++agent_;
  }
  if (agent_ < n_) begin_phase();
}

NoRegretLearnResult MultiAgentGdPrincipal::result() const {
  NoRegretLearnResult out;
  out.estimates.values = estimates_;
  out.estimates.epsilon = 0.0;
  out.rounds_used = rounds_;
  out.total_payment = paid_;
  out.phases = phases_;
  return out;
}

NoRegretLearnResult learn_single_agent_noregret(Agent& agent, const NormalFormGame& game,
                                                long horizon) {
  if (game.num_agents != 1) {
    throw std::invalid_argument("learn_single_agent_noregret: game must have one agent");
  }
  SingleAgentGdPrincipal principal(game.action_counts[0], horizon);
  std::vector<Agent*> agents = {&agent};
  run_protocol(principal, game, nullptr, agents);
  return principal.result();
}

NoRegretLearnResult learn_multi_agent_noregret(const std::vector<Agent*>& agents,
                                               const NormalFormGame& game,
                                               long phase_length) {
  MultiAgentGdPrincipal principal(game.action_counts, phase_length);
  run_protocol(principal, game, nullptr, agents);
  return principal.result();
}

long default_phase_length(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("default_phase_length: eps must be > 0");
  // K calibrated against the acceptance measurements: L = 50,000 yields
  // measured distances around 0.05 on 2x2 games, so K = eps^2 * L with a
  // safety margin lands at 160.
  constexpr double kCalibration = 160.0;
  return static_cast<long>(std::ceil(kCalibration / (eps * eps)));
}

}  // namespace steerlab
