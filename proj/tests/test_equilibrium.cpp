#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "steerlab/equilibrium.hpp"
#include "steerlab/game.hpp"
#include "steerlab/lp.hpp"
#include "steerlab/rng.hpp"

using namespace steerlab;

namespace {

NormalFormGame two_by_two(std::vector<double> u0, std::vector<double> u1) {
  NormalFormGame g;
  g.num_agents = 2;
  g.action_counts = {2, 2};
  Eigen::VectorXd v0(4), v1(4);
  for (int k = 0; k < 4; ++k) {
    v0(k) = u0[k];
    v1(k) = u1[k];
  }
  g.utilities = {v0, v1};
  g.validate();
  return g;
}

// Agent 0 wants the actions to match, agent 1 wants them to differ. The only
// correlated equilibrium is uniform, which makes optimal values easy to pin.
NormalFormGame matching_pennies() {
  return two_by_two({1, 0, 0, 1}, {0, 1, 1, 0});
}

NormalFormGame coordination() { return two_by_two({1, 0, 0, 1}, {1, 0, 0, 1}); }

Eigen::VectorXd vec4(double a, double b, double c, double d) {
  Eigen::VectorXd v(4);
  v << a, b, c, d;
  return v;
}

// Plain optimal correlated equilibrium as a standalone linear program,
// written directly against LpProblem so it shares no code with the solver
// under test.
double optimal_ce_value(const NormalFormGame& g, const Eigen::VectorXd& u0) {
  LpProblem lp;
  const std::int64_t profiles = g.num_profiles();
  std::vector<int> mu(profiles);
  for (std::int64_t a = 0; a < profiles; ++a) mu[a] = lp.add_variable(u0(a), 0.0, 1.0);
  std::vector<std::pair<int, double>> total;
  for (std::int64_t a = 0; a < profiles; ++a) total.push_back({mu[a], 1.0});
  lp.add_row(total, '=', 1.0);
  for (int i = 0; i < g.num_agents; ++i) {
    const OpponentIndexer idx(g, i);
    for (int rec = 0; rec < g.action_counts[i]; ++rec) {
      for (int dev = 0; dev < g.action_counts[i]; ++dev) {
        if (dev == rec) continue;
        std::vector<std::pair<int, double>> row;
        for (std::int64_t opp = 0; opp < idx.count(); ++opp) {
          const double gain = g.utility(i, idx.joint_index(opp, dev)) -
                              g.utility(i, idx.joint_index(opp, rec));
          row.push_back({mu[idx.joint_index(opp, rec)], gain});
        }
        lp.add_row(row, '<', 0.0);
      }
    }
  }
  const LpSolution sol = lp.maximize();
  REQUIRE(sol.status == LpStatus::Optimal);
  return sol.objective;
}

Eigen::VectorXd random_u0(CounterRng& rng, std::int64_t profiles) {
  Eigen::VectorXd u(profiles);
  for (std::int64_t a = 0; a < profiles; ++a) u(a) = rng.next_double();
  return u;
}

GeneralCep random_general_cep(const NormalFormGame& g, int signals_per_agent,
                              CounterRng& rng) {
  GeneralCep cep;
  cep.signal_counts.assign(g.num_agents, signals_per_agent);
  std::int64_t S = 1;
  for (int i = 0; i < g.num_agents; ++i) S *= signals_per_agent;
  cep.mu.resize(S);
  for (std::int64_t s = 0; s < S; ++s) cep.mu(s) = rng.next_double() + 1e-3;
  cep.mu /= cep.mu.sum();
  const std::int64_t profiles = g.num_profiles();
  for (int i = 0; i < g.num_agents; ++i) {
    Eigen::MatrixXd pi(signals_per_agent, g.action_counts[i]);
    for (int s = 0; s < signals_per_agent; ++s) {
      double row_sum = 0.0;
      for (int a = 0; a < g.action_counts[i]; ++a) {
        pi(s, a) = rng.next_double() + 1e-3;
        row_sum += pi(s, a);
      }
      pi.row(s) /= row_sum;
    }
    cep.strategies.push_back(pi);
    Eigen::MatrixXd pay(S, profiles);
    for (std::int64_t s = 0; s < S; ++s)
      for (std::int64_t a = 0; a < profiles; ++a) pay(s, a) = 2.0 * rng.next_double();
    cep.payments.push_back(pay);
  }
  return cep;
}

}  // namespace

TEST_CASE("the unique correlated equilibrium of matching pennies is found") {
  const NormalFormGame g = matching_pennies();
  const Eigen::VectorXd u0 = g.utilities[0];
  const CepSolution sol = solve_optimal_cep(g, u0, 0.0, 0.0);
  CHECK(sol.objective == doctest::Approx(0.5).epsilon(1e-7));
  for (int a = 0; a < 4; ++a) CHECK(sol.mu(a) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(sol.expected_total_payment() <= 1e-9);
  const CepReport report = verify_cep(g, u0, sol);
  CHECK(report.passes);
  CHECK(report.max_violation <= 1e-7);
  CHECK(report.objective == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("zero-cap solutions agree with a standalone equilibrium program") {
  CounterRng rng(501, "ce-cross-check");
  for (int trial = 0; trial < 25; ++trial) {
    const NormalFormGame g = generate_random_game({2, 2}, 9000 + trial);
    const Eigen::VectorXd u0 = random_u0(rng, 4);
    const CepSolution sol = solve_optimal_cep(g, u0, 0.0, 0.0);
    CHECK(sol.objective == doctest::Approx(optimal_ce_value(g, u0)).epsilon(1e-6));
    CHECK(verify_cep(g, u0, sol).passes);
  }
}

TEST_CASE("payments unlock strict-equilibrium value") {
  // Point mass on the principal's favorite strict equilibrium needs no
  // payments at all, so the solver must return exactly that.
  const NormalFormGame g = coordination();
  const Eigen::VectorXd u0 = vec4(0, 0, 0, 1);
  const CepSolution sol = solve_optimal_cep(g, u0, 0.0, 0.0);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.mu(3) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(verify_cep(g, u0, sol).passes);
}

TEST_CASE("relaxing the incentive budget never hurts") {
  CounterRng rng(733, "eps-monotone");
  for (int trial = 0; trial < 20; ++trial) {
    const NormalFormGame g = generate_random_game({2, 2}, 4400 + trial);
    const Eigen::VectorXd u0 = random_u0(rng, 4);
    const double v0 = solve_optimal_cep(g, u0, 0.0, 0.0).objective;
    const double v1 = solve_optimal_cep(g, u0, 0.01, 0.0).objective;
    const double v2 = solve_optimal_cep(g, u0, 0.1, 0.0).objective;
    CHECK(v1 >= v0 - 1e-8);
    CHECK(v2 >= v1 - 1e-8);
    // A bigger payment cap likewise only widens the feasible set.
    const double c1 = solve_optimal_cep(g, u0, 0.0, 1.0).objective;
    const double c4 = solve_optimal_cep(g, u0, 0.0, 4.0).objective;
    CHECK(c1 >= v0 - 1e-8);
    CHECK(c4 >= c1 - 1e-8);
  }
}

TEST_CASE("uniform play with no payments verifies cleanly") {
  const NormalFormGame g = matching_pennies();
  CepSolution sol;
  sol.mu = Eigen::VectorXd::Constant(4, 0.25);
  sol.payments = {Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)};
  sol.epsilon = 0.0;
  const CepReport report = verify_cep(g, g.utilities[0], sol);
  CHECK(report.passes);
  CHECK(report.max_violation <= 1e-12);
  CHECK(report.expected_total_payment == 0.0);
}

TEST_CASE("a dominated recommendation is flagged with its exact gain") {
  const NormalFormGame g = coordination();
  CepSolution sol;
  sol.mu = vec4(0, 0, 1, 0);  // point mass on the miscoordinated profile (0,1)
  sol.payments = {Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)};
  sol.epsilon = 0.0;
  const CepReport report = verify_cep(g, g.utilities[0], sol);
  CHECK_FALSE(report.passes);
  CHECK(report.violation_per_agent[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.violation_per_agent[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.max_violation == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("recommendation-dependent payments beat signal-independent ones") {
  const GameBundle bundle = generate_signal_dependence_game(100.0);
  const CepSolution dependent =
      solve_optimal_cep(bundle.game, bundle.principal_utility, 0.0, 1.0);
  CHECK(dependent.objective == doctest::Approx(-1.0 / 3.0).epsilon(1e-6));
  CHECK(verify_cep(bundle.game, bundle.principal_utility, dependent).passes);

  const CepSolution flat =
      solve_optimal_cep_signal_independent(bundle.game, bundle.principal_utility, 0.0);
  CHECK(flat.objective <= -1.0 / 3.0 - 0.05);
  const CepReport report = verify_cep(bundle.game, bundle.principal_utility, flat);
  CHECK(report.max_violation <= 1e-6);
  // The search box must not be what binds the restricted optimum: payments on
  // recommendations that actually occur stay inside it.
  for (int i = 0; i < 2; ++i) {
    for (int a = 0; a < 4; ++a) {
      if (flat.mu(a) > 1e-7) CHECK(flat.payment(i, a, a) < 3.99);
    }
  }
}

TEST_CASE("an indifferent principal pays nothing") {
  const NormalFormGame g = matching_pennies();
  const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(4);
  const CepSolution sol = solve_optimal_cep_signal_independent(g, u0, 0.0);
  CHECK(sol.objective == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(sol.expected_total_payment() <= 1e-5);
}

TEST_CASE("signal-independent optima never exceed unrestricted ones") {
  CounterRng rng(881, "nesting");
  for (int trial = 0; trial < 8; ++trial) {
    const NormalFormGame g = generate_random_game({2, 2}, 7100 + trial);
    const Eigen::VectorXd u0 = random_u0(rng, 4);
    const CepSolution flat = solve_optimal_cep_signal_independent(g, u0, 0.01);
    const CepSolution full = solve_optimal_cep(g, u0, 0.01, 4.0);
    CHECK(flat.objective <= full.objective + 1e-6);
    CHECK(verify_cep(g, u0, flat).max_violation <= 0.01 + 1e-6);
  }
}

TEST_CASE("identity signals canonicalize to themselves") {
  const NormalFormGame g = matching_pennies();
  const Eigen::VectorXd u0 = g.utilities[0];
  GeneralCep cep;
  cep.signal_counts = {2, 2};
  cep.mu = vec4(0.25, 0.25, 0.25, 0.25);
  cep.strategies = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  Eigen::MatrixXd pay = Eigen::MatrixXd::Zero(4, 4);
  pay(1, 1) = 0.5;
  pay(2, 3) = 0.25;
  cep.payments = {pay, Eigen::MatrixXd::Zero(4, 4)};
  const CepSolution canon = canonicalize_cep(g, u0, cep);
  CHECK((canon.mu - cep.mu).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((canon.payments[0] - pay).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(canon.objective ==
        doctest::Approx(general_cep_objective(g, u0, cep)).epsilon(1e-12));
}

TEST_CASE("relabeled signals canonicalize to the relabeling's pushforward") {
  const NormalFormGame g = matching_pennies();
  const Eigen::VectorXd u0 = g.utilities[0];
  GeneralCep cep;
  cep.signal_counts = {2, 2};
  cep.mu = vec4(0.4, 0.3, 0.2, 0.1);
  // Signal s means action 1 - s for both agents.
  Eigen::MatrixXd swap(2, 2);
  swap << 0, 1, 1, 0;
  cep.strategies = {swap, swap};
  cep.payments = {Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)};
  cep.payments[0](0, 3) = 1.0;  // signals (0,0); realized (1,1)
  const CepSolution canon = canonicalize_cep(g, u0, cep);
  // Profile indices flip both coordinates: s-index 0 maps to a-index 3, etc.
  CHECK(canon.mu(3) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(canon.mu(2) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(canon.mu(1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(canon.mu(0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(canon.payments[0](3, 3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(canon.objective ==
        doctest::Approx(general_cep_objective(g, u0, cep)).epsilon(1e-12));
}

TEST_CASE("canonicalization preserves value and never adds violation") {
  CounterRng rng(17, "canon");
  for (int trial = 0; trial < 50; ++trial) {
    const NormalFormGame g = generate_random_game({2, 2}, 300 + trial);
    const Eigen::VectorXd u0 = random_u0(rng, 4);
    const GeneralCep cep = random_general_cep(g, 3, rng);
    const double general_value = general_cep_objective(g, u0, cep);
    const std::vector<double> general_viol = general_cep_violations(g, cep);
    const CepSolution canon = canonicalize_cep(g, u0, cep);
    CHECK(canon.mu.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(canon.mu.minCoeff() >= -1e-12);
    CHECK(std::abs(canon.objective - general_value) <= 1e-9);
    const CepReport report = verify_cep(g, u0, canon);
    CHECK(report.objective == doctest::Approx(canon.objective).epsilon(1e-9));
    for (int i = 0; i < 2; ++i)
      CHECK(report.violation_per_agent[i] <= general_viol[i] + 1e-9);
  }
}

TEST_CASE("solutions survive a serialization round trip bit for bit") {
  const NormalFormGame g = matching_pennies();
  CepSolution sol;
  sol.mu = vec4(1.0 / 3.0, 1.0 / 7.0, 0.1, 1.0 - 1.0 / 3.0 - 1.0 / 7.0 - 0.1);
  sol.payments = {Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)};
  sol.payments[0](0, 0) = std::sqrt(2.0) - 1.0;
  sol.payments[0](2, 1) = 1.0 / 3.0;  // off-diagonal mass forces the full form
  sol.payments[1](3, 3) = 0.1 + 1e-13;
  sol.epsilon = 0.0078125;
  sol.objective = -1.0 / 3.0;
  const CepSolution back = cep_from_json(cep_to_json(sol));
  REQUIRE(back.mu.size() == sol.mu.size());
  CHECK(back.mu == sol.mu);
  REQUIRE(back.payments.size() == 2);
  CHECK(back.payments[0] == sol.payments[0]);
  CHECK(back.payments[1] == sol.payments[1]);
  CHECK(back.epsilon == sol.epsilon);
  CHECK(back.objective == sol.objective);

  const CepSolution solved = solve_optimal_cep(g, g.utilities[0], 0.01, 1.0);
  const CepSolution solved_back = cep_from_json(cep_to_json(solved));
  CHECK(solved_back.mu == solved.mu);
  CHECK(solved_back.payments[0] == solved.payments[0]);
  CHECK(solved_back.payments[1] == solved.payments[1]);
  CHECK(solved_back.objective == solved.objective);
}
