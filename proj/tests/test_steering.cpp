#include <doctest.h>

#include <cmath>
#include <vector>

#include "steerlab/agents.hpp"
#include "steerlab/game.hpp"
#include "steerlab/steering.hpp"

using namespace steerlab;

namespace {

Eigen::VectorXd pay2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

RoundRecord learning_record(long t, double u0, double pay_total) {
  RoundRecord r;
  r.t = t;
  r.stage = 0;
  r.signals = {Signal::bot(), Signal::pin(0)};
  r.actions = {0, 0};
  r.realized_payment = pay2(pay_total, 0.0);
  r.principal_utility = u0;
  return r;
}

RoundRecord steering_record(long t, std::vector<int> rec, std::vector<int> played,
                            double u0, Eigen::VectorXd pay) {
  RoundRecord r;
  r.t = t;
  r.stage = 1;
  r.signals = {Signal::recommend(rec[0]), Signal::recommend(rec[1])};
  r.actions = std::move(played);
  r.realized_payment = std::move(pay);
  r.principal_utility = u0;
  return r;
}

struct CollectingSink : RoundSink {
  std::vector<RoundRecord> records;
  void on_round(const RoundRecord& record) override { records.push_back(record); }
};

}  // namespace

TEST_CASE("the objective ledger splits stages and counts disobedience") {
  std::vector<RoundRecord> records;
  records.push_back(learning_record(0, 0.5, 0.25));
  records.push_back(steering_record(1, {0, 1}, {0, 1}, 1.0, pay2(0.3, 0.2)));
  records.push_back(steering_record(2, {0, 1}, {1, 1}, 0.0, pay2(0.0, 2.0)));

  const ObjectiveLedger ledger = evaluate_objective(records);
  CHECK(ledger.learning.rounds == 1);
  CHECK(ledger.learning.utility_sum == 0.5);
  CHECK(ledger.learning.payment_sum == 0.25);
  CHECK(ledger.steering.rounds == 2);
  CHECK(ledger.steering.utility_sum == 1.0);
  CHECK(ledger.steering.payment_sum == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(ledger.disobedient_rounds == 1);
  REQUIRE(ledger.disobedient_rounds_per_agent.size() == 2);
  CHECK(ledger.disobedient_rounds_per_agent[0] == 1);
  CHECK(ledger.disobedient_rounds_per_agent[1] == 0);
  CHECK(ledger.total_rounds() == 3);
  CHECK(ledger.average_objective() ==
        doctest::Approx(-1.25 / 3.0).epsilon(1e-12));

  // Folding one record at a time is the same computation.
  ObjectiveLedger incremental;
  for (const RoundRecord& r : records) ledger_add_round(incremental, r);
  CHECK(incremental.objective_sum() == ledger.objective_sum());
  CHECK(incremental.disobedient_rounds == ledger.disobedient_rounds);
  CHECK(incremental.average_objective() == ledger.average_objective());
}

TEST_CASE("learning-stage pin mismatches are not disobedience") {
  RoundRecord r = learning_record(0, 0.0, 0.0);
  r.signals = {Signal::bot(), Signal::pin(1)};
  r.actions = {0, 0};  // pinned agent strays during learning
  const ObjectiveLedger ledger = evaluate_objective({r});
  CHECK(ledger.disobedient_rounds == 0);
}

TEST_CASE("steering defaults resolve from the horizon") {
  SteeringConfig cfg;
  cfg.total_rounds = 10000;
  CHECK(cfg.resolved_rho() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(cfg.resolved_phase_length() == 1000);
  CHECK_NOTHROW(cfg.validate({2, 2}));

  SteeringConfig tight;
  tight.total_rounds = 100;  // resolved L = 32, but 32 * 4 phases > 100
  CHECK_THROWS_AS(tight.validate({2, 2}), std::invalid_argument);

  SteeringConfig explicit_l;
  explicit_l.total_rounds = 1000;
  explicit_l.phase_length = 300;
  CHECK_THROWS_AS(explicit_l.validate({2, 2}), std::invalid_argument);

  SteeringConfig custom;
  custom.total_rounds = 4000;
  custom.phase_length = 400;
  custom.rho = 0.05;
  CHECK(custom.resolved_phase_length() == 400);
  CHECK(custom.resolved_rho() == 0.05);
  CHECK_NOTHROW(custom.validate({2, 2}));
}

TEST_CASE("a full steering run has the promised shape") {
  const NormalFormGame g = generate_random_game({2, 2}, 5);
  Eigen::VectorXd u0(4);
  u0 << 0.2, 0.9, 0.4, 0.7;
  SteeringConfig cfg;
  cfg.total_rounds = 3000;
  cfg.phase_length = 300;
  MwuAgent a0(0, 2, cfg.total_rounds, 77);
  MwuAgent a1(1, 2, cfg.total_rounds, 77);
  CollectingSink sink;
  const SteeringOutcome outcome = steer({&a0, &a1}, g, u0, cfg, 42, &sink);

  CHECK(outcome.ledger.total_rounds() == 3000);
  CHECK(outcome.ledger.learning.rounds == 1200);
  CHECK(outcome.ledger.steering.rounds == 1800);
  CHECK(outcome.epsilon_used > 0.0);
  CHECK(outcome.epsilon_used <= cfg.epsilon_cap);
  CHECK(outcome.cep.epsilon == 2.0 * outcome.epsilon_used);
  CHECK(outcome.cep.mu.sum() == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(outcome.learned.values.size() == 2);
  CHECK(outcome.ledger.disobedient_rounds <= outcome.ledger.steering.rounds);

  REQUIRE(sink.records.size() == 3000);
  const double rho = cfg.resolved_rho();
  for (std::size_t k = 0; k < sink.records.size(); ++k) {
    const RoundRecord& r = sink.records[k];
    CHECK(r.t == static_cast<long>(k));
    if (k < 1200) {
      CHECK(r.stage == 0);
    } else {
      CHECK(r.stage == 1);
      std::vector<int> rec(2);
      for (int i = 0; i < 2; ++i) {
        REQUIRE(r.signals[i].kind == Signal::Kind::Recommend);
        rec[i] = r.signals[i].action;
      }
      // Every steering payment is the obedience bonus, the stray penalty, or
      // nothing, decided per agent by the recommendation-form rule.
      const std::int64_t s = g.index_of(rec);
      const bool all_obeyed = r.actions == rec;
      for (int i = 0; i < 2; ++i) {
        const double paid = r.realized_payment(i);
        if (r.actions[i] != rec[i]) {
          CHECK(paid == 0.0);
        } else if (all_obeyed) {
          const double bonus =
              outcome.cep.payment(i, s, s) + 2.0 * outcome.epsilon_used + rho;
          CHECK(paid == doctest::Approx(bonus).epsilon(1e-12));
        } else {
          CHECK(paid == cfg.penalty_payment);
        }
      }
    }
  }

  // The online ledger and a replay over the recorded rounds are the same fold.
  const ObjectiveLedger replay = evaluate_objective(sink.records);
  CHECK(replay.objective_sum() == outcome.ledger.objective_sum());
  CHECK(replay.learning.payment_sum == outcome.ledger.learning.payment_sum);
  CHECK(replay.steering.utility_sum == outcome.ledger.steering.utility_sum);
  CHECK(replay.disobedient_rounds == outcome.ledger.disobedient_rounds);
  CHECK(replay.average_objective() == outcome.ledger.average_objective());
}

TEST_CASE("steering is deterministic in the seeds") {
  const NormalFormGame g = generate_random_game({2, 2}, 12);
  Eigen::VectorXd u0(4);
  u0 << 0.0, 0.0, 0.0, 1.0;
  SteeringConfig cfg;
  cfg.total_rounds = 2000;
  cfg.phase_length = 200;
  auto run_once = [&]() {
    MwuAgent a0(0, 2, cfg.total_rounds, 9);
    MwuAgent a1(1, 2, cfg.total_rounds, 9);
    return steer({&a0, &a1}, g, u0, cfg, 31);
  };
  const SteeringOutcome first = run_once();
  const SteeringOutcome second = run_once();
  CHECK(first.ledger.objective_sum() == second.ledger.objective_sum());
  CHECK(first.ledger.disobedient_rounds == second.ledger.disobedient_rounds);
  CHECK(first.epsilon_used == second.epsilon_used);
  CHECK(first.cep.mu == second.cep.mu);
  CHECK(first.dominance_flagged_rounds == second.dominance_flagged_rounds);
}

TEST_CASE("an easy strict equilibrium is steered to with little friction") {
  // Both agents strictly prefer to coordinate on action 1 once payments tip
  // the scale; recommendations there are self-enforcing, so disobedience
  // should be confined to the early exploration of each fresh signal.
  NormalFormGame g;
  g.num_agents = 2;
  g.action_counts = {2, 2};
  Eigen::VectorXd u(4);
  u << 0.6, 0.1, 0.1, 0.95;
  g.utilities = {u, u};
  g.validate();
  Eigen::VectorXd u0(4);
  u0 << 0.0, 0.0, 0.0, 1.0;
  SteeringConfig cfg;
  cfg.total_rounds = 4000;
  cfg.phase_length = 250;
  MwuAgent a0(0, 2, cfg.total_rounds, 3);
  MwuAgent a1(1, 2, cfg.total_rounds, 3);
  const SteeringOutcome outcome = steer({&a0, &a1}, g, u0, cfg, 8);
  CHECK(outcome.ledger.steering.rounds == 3000);
  CHECK(outcome.ledger.disobedient_rounds < 1500);
  // The recommendation distribution concentrates on the principal's target.
  CHECK(outcome.cep.mu(3) > 0.5);
}
