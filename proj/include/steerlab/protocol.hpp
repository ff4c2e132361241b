#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "steerlab/game.hpp"

namespace steerlab {

// Thrown when an agent behaves in a way no conforming agent can (a pinned
// agent deviating under a dominant payment, an escalation that never
// triggers a switch). The CLI maps it to exit code 2.
struct ProtocolViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Private signal sent to one agent at the start of a round. Learning phases
// use Bot ("learn freely") and Pin(a) ("you are being paid to play a");
// the steering phase uses Recommend(a). The three kinds are distinct keys:
// an agent keeps separate learning state per signal, so recommendation
// behavior is never contaminated by pin-phase behavior.
struct Signal {
  enum class Kind : std::uint8_t { None = 0, Bot = 1, Pin = 2, Recommend = 3 };
  Kind kind = Kind::None;
  int action = -1;

  static Signal none() { return {}; }
  static Signal bot() { return {Kind::Bot, -1}; }
  static Signal pin(int a) { return {Kind::Pin, a}; }
  static Signal recommend(int a) { return {Kind::Recommend, a}; }

  bool operator==(const Signal& o) const = default;

  std::string encode() const {
    switch (kind) {
      case Kind::None: return "-";
      case Kind::Bot: return "b";
      case Kind::Pin: return "p" + std::to_string(action);
      case Kind::Recommend: return "r" + std::to_string(action);
    }
    return "-";
  }

  static Signal decode(std::string_view s) {
    if (s.empty() || s == "-") return none();
    if (s == "b") return bot();
    const char kind = s[0];
    if ((kind == 'p' || kind == 'r') && s.size() > 1) {
      int a = 0;
      for (char c : s.substr(1)) {
        if (c < '0' || c > '9') throw std::invalid_argument("bad signal encoding");
        a = a * 10 + (c - '0');
      }
      return kind == 'p' ? pin(a) : recommend(a);
    }
    throw std::invalid_argument("bad signal encoding: " + std::string(s));
  }
};

struct SignalHash {
  std::size_t operator()(const Signal& s) const {
    return (static_cast<std::size_t>(s.kind) << 24) ^ static_cast<std::size_t>(s.action + 1);
  }
};

// Payment commitment for one round. Learning principals publish action-form
// offers: agent i's payment depends only on its own action. The steering
// phase uses a recommendation-form rule driven by the joint recommendation s
// and the realized profile a:
//
//   pay_i(s, a) = obedience_value_i        if a == s
//                 pin_value                if a != s but a_i == s_i
//                 0                        if a_i != s_i.
//
// Only the action-form part is public input to agents (offers()); the
// realized recommendation inside a recommendation-form rule stays with the
// engine, which delivers each agent its own signal separately.
class PaymentRule {
 public:
  PaymentRule() = default;

  static PaymentRule action_form(std::vector<Eigen::VectorXd> per_agent) {
    PaymentRule r;
    r.action_form_ = std::move(per_agent);
    return r;
  }

  static PaymentRule recommendation_form(std::vector<int> recommendation,
                                         Eigen::VectorXd obedience_value,
                                         double pin_value) {
    PaymentRule r;
    r.recommendation_ = std::move(recommendation);
    r.obedience_value_ = std::move(obedience_value);
    r.pin_value_ = pin_value;
    r.is_recommendation_ = true;
    return r;
  }

  bool is_recommendation_form() const { return is_recommendation_; }

  // Public action-form offers (empty in recommendation-form rounds).
  const std::vector<Eigen::VectorXd>& offers() const { return action_form_; }

  // Payment to `agent` when the realized joint profile is `profile`.
  double value(int agent, const std::vector<int>& profile) const {
    if (!is_recommendation_) {
      if (action_form_.empty()) return 0.0;
      return action_form_[agent](profile[agent]);
    }
    if (profile[agent] != recommendation_[agent]) return 0.0;
    for (std::size_t j = 0; j < profile.size(); ++j) {
      if (profile[j] != recommendation_[j]) return pin_value_;
    }
    return obedience_value_(agent);
  }

 private:
  std::vector<Eigen::VectorXd> action_form_;
  std::vector<int> recommendation_;
  Eigen::VectorXd obedience_value_;
  double pin_value_ = 0.0;
  bool is_recommendation_ = false;
};

struct RoundPlan {
  PaymentRule payments;
  std::vector<Signal> signals;  // one per agent
  int stage = 0;                // 0 = learning, 1 = steering
};

// An agent sees its own signal and the public action-form offers, commits to
// an action, and afterwards observes its full utility vector for the round
// (game payoff plus payment as a function of its own action, everyone else's
// realized action fixed). It never sees the current round's other actions
// before committing; the interface has no channel for them.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual int act(const Signal& signal, const std::vector<Eigen::VectorXd>& offers,
                  long t) = 0;
  virtual void update(const Signal& signal, const Eigen::VectorXd& total_utilities,
                      int played) = 0;
};

class Principal {
 public:
  virtual ~Principal() = default;
  virtual RoundPlan plan_round(long t) = 0;
  virtual void observe(long t, const std::vector<int>& actions) = 0;
  virtual bool finished() const = 0;
};

// Everything the harness records about one protocol round. payment_vectors
// holds, for each agent, the payment it would have received for each own
// action with the others' realized actions fixed; that is exactly what
// replay and regret audits need, and for action-form rounds it equals the
// published offer.
struct RoundRecord {
  long t = 0;
  int stage = 0;
  std::vector<Signal> signals;
  std::vector<int> actions;
  std::vector<Eigen::VectorXd> payment_vectors;
  Eigen::VectorXd realized_payment;  // per agent
  Eigen::VectorXd realized_total;    // per agent: game payoff + payment
  double principal_utility = 0.0;
};

class RoundSink {
 public:
  virtual ~RoundSink() = default;
  virtual void on_round(const RoundRecord& record) = 0;
};

// Runs the round protocol until the principal reports finished: publish
// payments and signals, collect all actions simultaneously, then reveal
// outcomes. principal_utility may be null. Returns the number of rounds.
long run_protocol(Principal& principal, const NormalFormGame& game,
                  const Eigen::VectorXd* principal_utility,
                  const std::vector<Agent*>& agents, RoundSink* sink = nullptr);

}  // namespace steerlab
