#include "steerlab/protocol.hpp"

#include <stdexcept>

namespace steerlab {

long run_protocol(Principal& principal, const NormalFormGame& game,
                  const Eigen::VectorXd* principal_utility,
                  const std::vector<Agent*>& agents, RoundSink* sink) {
  const int n = game.num_agents;
  if (static_cast<int>(agents.size()) != n) {
    throw std::logic_error("run_protocol: agent count does not match game");
  }
  long t = 0;
  std::vector<int> actions(n);
  for (; !principal.finished(); ++t) {
    RoundPlan plan = principal.plan_round(t);
    if (static_cast<int>(plan.signals.size()) != n) {
      throw std::logic_error("run_protocol: principal sent wrong signal count");
    }
    if (!plan.payments.is_recommendation_form() && !plan.payments.offers().empty()) {
      const auto& offers = plan.payments.offers();
      if (static_cast<int>(offers.size()) != n) {
        throw std::logic_error("run_protocol: offer count does not match game");
      }
      for (int i = 0; i < n; ++i) {
        if (offers[i].size() != game.action_counts[i]) {
          throw std::logic_error("run_protocol: offer length mismatch");
        }
        if ((offers[i].array() < -1e-12).any() || (offers[i].array() > 2.0 + 1e-12).any()) {
          throw std::logic_error("run_protocol: action-form payments must lie in [0, 2]");
        }
      }
    }

    // All agents commit before anything about the round is revealed.
    for (int i = 0; i < n; ++i) {
      actions[i] = agents[i]->act(plan.signals[i], plan.payments.offers(), t);
      if (actions[i] < 0 || actions[i] >= game.action_counts[i]) {
        throw ProtocolViolation("agent " + std::to_string(i) + " played an illegal action");
      }
    }

    RoundRecord record;
    record.t = t;
    record.stage = plan.stage;
    record.signals = plan.signals;
    record.actions = actions;
    record.payment_vectors.resize(n);
    record.realized_payment.resize(n);
    record.realized_total.resize(n);
    record.principal_utility =
        principal_utility ? (*principal_utility)(game.index_of(actions)) : 0.0;

    std::vector<int> counterfactual = actions;
    for (int i = 0; i < n; ++i) {
      const int m = game.action_counts[i];
      Eigen::VectorXd pay(m);
      Eigen::VectorXd total(m);
      for (int b = 0; b < m; ++b) {
        counterfactual[i] = b;
        pay(b) = plan.payments.value(i, counterfactual);
        total(b) = game.utility(i, game.index_of(counterfactual)) + pay(b);
      }
      counterfactual[i] = actions[i];
      record.payment_vectors[i] = std::move(pay);
      record.realized_payment(i) = record.payment_vectors[i](actions[i]);
      record.realized_total(i) = total(actions[i]);
      agents[i]->update(plan.signals[i], total, actions[i]);
    }

    principal.observe(t, actions);
    if (sink) sink->on_round(record);
  }
  return t;
}

}  // namespace steerlab
