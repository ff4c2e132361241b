#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "steerlab/agents.hpp"
#include "steerlab/game.hpp"
#include "steerlab/principal_rationalizable.hpp"

using namespace steerlab;

namespace {

NormalFormGame single_agent_game(std::vector<double> utilities) {
  NormalFormGame g;
  g.num_agents = 1;
  g.action_counts = {static_cast<int>(utilities.size())};
  Eigen::VectorXd u(utilities.size());
  for (std::size_t k = 0; k < utilities.size(); ++k) u(k) = utilities[k];
  g.utilities = {u};
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("probe counts shrink the bracket below half the target") {
  CHECK(bisection_probes(0.5) == 2);
  CHECK(bisection_probes(0.25) == 3);
  CHECK(bisection_probes(1.0 / 128.0) == 8);
  // After k probes the bracket has width 2^-(k-1); the last width must be
  // at most eps so the upper end is within eps of the threshold.
  for (double eps : {0.5, 0.1, 0.01, 1.0 / 128.0}) {
    const int k = bisection_probes(eps);
    CHECK(std::pow(0.5, k - 1) <= eps + 1e-12);
  }
}

TEST_CASE("bisection learns a single agent within tolerance") {
  const double eps = 1.0 / 128.0;
  const NormalFormGame g = single_agent_game({0.9, 0.2, 0.5});
  RationalizableAgent agent(g, 0, TiePolicy::GreedyUniform);
  const LearnResult res = learn_single_agent_optimal(agent, g, eps);
  CHECK(res.rounds_used == 3 * bisection_probes(eps));
  const double dist = strategic_distance(g, res.estimates.values, 0);
  CHECK(dist <= eps);
  CHECK(res.estimates.epsilon == doctest::Approx(eps));
  CHECK(res.total_payment >= 0.0);
}

TEST_CASE("bisection is exact on every tie policy") {
  const double eps = 1.0 / 128.0;
  for (TiePolicy policy :
       {TiePolicy::GreedyUniform, TiePolicy::AdversarialMax, TiePolicy::AdversarialMin}) {
    for (int seed = 0; seed < 5; ++seed) {
      const NormalFormGame g = generate_random_game({4}, 900 + seed);
      RationalizableAgent agent(g, 0, policy);
      const LearnResult res = learn_single_agent_optimal(agent, g, eps);
      CHECK(strategic_distance(g, res.estimates.values, 0) <= eps);
    }
  }
}

TEST_CASE("multi-agent bisection pins everyone else and sweeps pairs") {
  const double eps = 1.0 / 128.0;
  const NormalFormGame g = generate_random_game({3, 3}, 1234);
  RationalizableAgent a0(g, 0, TiePolicy::GreedyUniform);
  RationalizableAgent a1(g, 1, TiePolicy::GreedyUniform);
  const LearnResult res = learn_multi_agent_rationalizable({&a0, &a1}, g, eps);
  // 2 agents x 3 actions x 3 opponent actions x 8 probes.
  CHECK(res.rounds_used == 144);
  const DistanceReport report = strategic_distance(g, res.estimates.values);
  CHECK(report.max_distance <= eps);
}

TEST_CASE("escalation finds switch thresholds at minimal payment") {
  const double eps = 0.1;
  // Gap of action 1 to the baseline is 0.45, so the switch happens at the
  // fifth escalation step, payment 0.5.
  const NormalFormGame g = single_agent_game({1.0, 0.55});
  RationalizableAgent agent(g, 0, TiePolicy::GreedyUniform);
  const LearnResult res = learn_single_agent_min_payment(agent, g, eps);
  REQUIRE(res.escalation_steps.size() == 2);
  CHECK(res.escalation_steps[0] == 0);
  CHECK(res.escalation_steps[1] == 5);
  CHECK(res.total_payment == doctest::Approx(0.5));
  CHECK(res.estimates.values[0](0) == doctest::Approx(0.0));
  CHECK(res.estimates.values[0](1) == doctest::Approx(-0.5));
  CHECK(strategic_distance(g, res.estimates.values, 0) <= eps);
}

TEST_CASE("a tied action switches on the first positive payment") {
  const double eps = 0.1;
  const NormalFormGame g = single_agent_game({0.5, 0.5});
  RationalizableAgent agent(g, 0, TiePolicy::GreedyUniform);
  const LearnResult res = learn_single_agent_min_payment(agent, g, eps);
  CHECK(res.escalation_steps[1] == 1);
  CHECK(res.total_payment == doctest::Approx(0.1));
}

TEST_CASE("escalation payment stays within the structural bound") {
  const double eps = 0.01;
  for (int seed = 0; seed < 20; ++seed) {
    const NormalFormGame g = generate_random_game({6}, 4000 + seed);
    RationalizableAgent agent(g, 0, TiePolicy::GreedyUniform);
    const LearnResult res = learn_single_agent_min_payment(agent, g, eps);
    const double best = g.utilities[0].maxCoeff();
    double gap_sum = 0.0;
    for (int a = 0; a < 6; ++a) gap_sum += best - g.utilities[0](a);
    CHECK(res.total_payment <= gap_sum + 6 * eps + 1e-12);
    CHECK(strategic_distance(g, res.estimates.values, 0) <= eps);
  }
}

TEST_CASE("an agent that never switches is a protocol violation") {
  const NormalFormGame g = single_agent_game({0.9, 0.1});
  struct Stubborn : Agent {
    int act(const Signal&, const std::vector<Eigen::VectorXd>&, long) override { return 0; }
    void update(const Signal&, const Eigen::VectorXd&, int) override {}
  } stubborn;
  CHECK_THROWS_AS(learn_single_agent_min_payment(stubborn, g, 0.1), ProtocolViolation);
}
