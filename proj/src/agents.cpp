#include "steerlab/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "steerlab/lp.hpp"

namespace steerlab {

Eigen::VectorXd mwu_strategy(const Eigen::VectorXd& cumulative, double eta) {
  if (cumulative.size() == 0) {
    throw std::invalid_argument("mwu_strategy: empty cumulative vector");
  }
  if (!cumulative.allFinite() || !std::isfinite(eta)) {
    throw std::invalid_argument("mwu_strategy: non-finite input");
  }
  const Eigen::VectorXd z = eta * (cumulative.array() - cumulative.maxCoeff()).matrix();
  Eigen::VectorXd x = z.array().exp();
  x /= x.sum();
  return x;
}

MwuAgent::MwuAgent(int agent_id, int num_actions, long horizon, std::uint64_t seed)
    : agent_id_(agent_id), num_actions_(num_actions), horizon_(horizon), seed_(seed) {
  if (num_actions < 1) throw std::invalid_argument("MwuAgent: need at least one action");
  if (horizon < 1) throw std::invalid_argument("MwuAgent: horizon must be positive");
  eta_ = std::sqrt(std::log(static_cast<double>(num_actions)) /
                   static_cast<double>(horizon));
}

SignalLearner& MwuAgent::learner_for(const Signal& signal) {
  auto it = table_.find(signal);
  if (it == table_.end()) {
    SignalLearner fresh;
    fresh.cumulative = Eigen::VectorXd::Zero(num_actions_);
    fresh.ledger = Eigen::VectorXd::Zero(num_actions_);
    fresh.rng = CounterRng(seed_, "agent" + std::to_string(agent_id_) + "/" + signal.encode());
    it = table_.emplace(signal, std::move(fresh)).first;
    order_.push_back(signal);
  }
  return it->second;
}

int MwuAgent::act(const Signal& signal, const std::vector<Eigen::VectorXd>&, long) {
  SignalLearner& learner = learner_for(signal);
  return learner.rng.sample_discrete(mwu_strategy(learner.cumulative, eta_));
}

void MwuAgent::update(const Signal& signal, const Eigen::VectorXd& total_utilities,
                      int played) {
  if (total_utilities.size() != num_actions_) {
    throw std::invalid_argument("MwuAgent::update: utility vector has wrong length");
  }
  if (!total_utilities.allFinite()) {
    throw std::invalid_argument("MwuAgent::update: non-finite utilities");
  }
  SignalLearner& learner = learner_for(signal);
  learner.cumulative += total_utilities;
  learner.ledger.array() += total_utilities.array() - total_utilities(played);
  learner.rounds += 1;
  learner.peak_regret = std::max(learner.peak_regret, learner.ledger.maxCoeff());
}

Eigen::VectorXd MwuAgent::strategy(const Signal& signal) const {
  const SignalLearner* l = learner(signal);
  if (l == nullptr) {
    return Eigen::VectorXd::Constant(num_actions_, 1.0 / num_actions_);
  }
  return mwu_strategy(l->cumulative, eta_);
}

const SignalLearner* MwuAgent::learner(const Signal& signal) const {
  auto it = table_.find(signal);
  return it == table_.end() ? nullptr : &it->second;
}

double MwuAgent::max_peak_regret() const {
  double peak = 0.0;
  for (const Signal& s : order_) peak = std::max(peak, table_.at(s).peak_regret);
  return peak;
}

namespace {

// Walks the product of the opponents' surviving sets, invoking fn with the
// full profile (the own slot is left at whatever the caller set).
template <typename Fn>
void for_each_surviving_profile(const std::vector<std::vector<int>>& survivors, int agent,
                                std::vector<int>& profile, int j, Fn&& fn) {
  const int n = static_cast<int>(survivors.size());
  if (j == n) {
    fn(profile);
    return;
  }
  if (j == agent) {
    for_each_surviving_profile(survivors, agent, profile, j + 1, fn);
    return;
  }
  for (int a : survivors[j]) {
    profile[j] = a;
    for_each_surviving_profile(survivors, agent, profile, j + 1, fn);
  }
}

// Strict domination check for one action. First tries pure dominators (cheap
// and very common once payments pin an agent), then the mixture LP.
bool is_strictly_dominated(const NormalFormGame& game,
                           const std::vector<std::vector<int>>& survivors, int agent,
                           int action) {
  std::vector<int> others;
  for (int b : survivors[agent]) {
    if (b != action) others.push_back(b);
  }
  if (others.empty()) return false;

  // Collect the payoff rows once: for each surviving opponent profile, the
  // candidate's payoff and every alternative's payoff.
  std::vector<double> base;
  std::vector<std::vector<double>> alt(others.size());
  std::vector<int> profile(game.num_agents, 0);
  profile[agent] = action;
  for_each_surviving_profile(survivors, agent, profile, 0, [&](std::vector<int>& p) {
    p[agent] = action;
    base.push_back(game.utility(agent, game.index_of(p)));
    for (std::size_t k = 0; k < others.size(); ++k) {
      p[agent] = others[k];
      alt[k].push_back(game.utility(agent, game.index_of(p)));
    }
    p[agent] = action;
  });
  const std::size_t rows = base.size();

  constexpr double kMargin = 1e-9;
  for (std::size_t k = 0; k < others.size(); ++k) {
    bool dominates = true;
    for (std::size_t r = 0; r < rows; ++r) {
      if (alt[k][r] <= base[r] + kMargin) {
        dominates = false;
        break;
      }
    }
    if (dominates) return true;
  }
  if (others.size() == 1) return false;

  // max t  s.t.  sum_k x_k alt_k(r) - t >= base(r) for all rows,
  //              sum_k x_k = 1, x >= 0.
  // The margin bound |t| <= 4 is safe: payoffs plus payments stay in [0, 3].
  LpProblem lp;
  std::vector<int> xvar(others.size());
  for (std::size_t k = 0; k < others.size(); ++k) xvar[k] = lp.add_variable(0.0);
  const int tvar = lp.add_variable(1.0, -4.0, 4.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::pair<int, double>> terms;
    terms.reserve(others.size() + 1);
    for (std::size_t k = 0; k < others.size(); ++k) terms.emplace_back(xvar[k], alt[k][r]);
    terms.emplace_back(tvar, -1.0);
    lp.add_row(terms, '>', base[r]);
  }
  {
    std::vector<std::pair<int, double>> terms;
    for (std::size_t k = 0; k < others.size(); ++k) terms.emplace_back(xvar[k], 1.0);
    lp.add_row(terms, '=', 1.0);
  }
  const LpSolution sol = lp.maximize();
  return sol.status == LpStatus::Optimal && sol.objective > kMargin;
}

std::vector<std::vector<int>> rationalizable_impl(const NormalFormGame& game,
                                                  const ScanOrder& order) {
  std::vector<std::vector<int>> survivors(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    survivors[i].resize(game.action_counts[i]);
    std::iota(survivors[i].begin(), survivors[i].end(), 0);
  }
  bool removed = true;
  while (removed) {
    removed = false;
    for (int i : order.agents) {
      if (survivors[i].size() <= 1) continue;
      for (int a : order.actions[i]) {
        auto it = std::find(survivors[i].begin(), survivors[i].end(), a);
        if (it == survivors[i].end()) continue;
        if (survivors[i].size() > 1 && is_strictly_dominated(game, survivors, i, a)) {
          survivors[i].erase(it);
          removed = true;
          if (survivors[i].size() <= 1) break;
        }
      }
    }
  }
  return survivors;
}

}  // namespace

std::vector<std::vector<int>> rationalizable_set(const NormalFormGame& game) {
  ScanOrder order;
  order.agents.resize(game.num_agents);
  std::iota(order.agents.begin(), order.agents.end(), 0);
  order.actions.resize(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    order.actions[i].resize(game.action_counts[i]);
    std::iota(order.actions[i].begin(), order.actions[i].end(), 0);
  }
  return rationalizable_impl(game, order);
}

std::vector<std::vector<int>> rationalizable_set(const NormalFormGame& game,
                                                 const ScanOrder& order) {
  return rationalizable_impl(game, order);
}

const char* to_string(TiePolicy policy) {
  switch (policy) {
    case TiePolicy::GreedyUniform: return "greedy-uniform";
    case TiePolicy::AdversarialMax: return "adversarial-max";
    case TiePolicy::AdversarialMin: return "adversarial-min";
  }
  return "unknown";
}

TiePolicy tie_policy_from_string(const std::string& s) {
  if (s == "greedy-uniform") return TiePolicy::GreedyUniform;
  if (s == "adversarial-max") return TiePolicy::AdversarialMax;
  if (s == "adversarial-min") return TiePolicy::AdversarialMin;
  throw std::invalid_argument("unknown tie policy: " + s);
}

int rationalizable_agent_act(const NormalFormGame& augmented_game, int agent,
                             TiePolicy policy) {
  const auto survivors = rationalizable_set(augmented_game);
  const std::vector<int>& own = survivors[agent];
  switch (policy) {
    case TiePolicy::AdversarialMax: return own.back();
    case TiePolicy::AdversarialMin: return own.front();
    case TiePolicy::GreedyUniform: break;
  }
  // Expected payoff against independent uniform play over the others'
  // surviving sets; the normalizing constant is shared, so plain sums do.
  double best_value = -std::numeric_limits<double>::infinity();
  int best_action = own.front();
  std::vector<int> profile(augmented_game.num_agents, 0);
  for (int a : own) {
    double total = 0.0;
    profile[agent] = a;
    for_each_surviving_profile(survivors, agent, profile, 0, [&](std::vector<int>& p) {
      total += augmented_game.utility(agent, augmented_game.index_of(p));
    });
    if (total > best_value + 1e-15) {
      best_value = total;
      best_action = a;
    }
  }
  return best_action;
}

int RationalizableAgent::act(const Signal&, const std::vector<Eigen::VectorXd>& offers,
                             long) {
  if (offers.empty()) {
    return rationalizable_agent_act(*base_game_, agent_id_, policy_);
  }
  const NormalFormGame augmented = augment_with_payments(*base_game_, offers);
  return rationalizable_agent_act(augmented, agent_id_, policy_);
}

}  // namespace steerlab
