#include "steerlab/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace steerlab {

namespace {

constexpr double kSignalIndependentCap = 4.0;
constexpr double kCertifiedGap = 1e-7;
constexpr int kNodeLimit = 20000;

void check_cep_inputs(const NormalFormGame& game,
                      const Eigen::VectorXd& principal_utility, double epsilon) {
  game.validate();
  if (principal_utility.size() != game.num_profiles()) {
    throw std::invalid_argument("cep: principal utility needs one entry per profile");
  }
  if (!principal_utility.allFinite()) {
    throw std::invalid_argument("cep: principal utility must be finite");
  }
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("cep: epsilon must be nonnegative");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double CepSolution::expected_payment(int agent) const {
  double total = 0.0;
  for (Eigen::Index a = 0; a < mu.size(); ++a) {
    total += mu(a) * payments[agent](a, a);
  }
  return total;
}

double CepSolution::expected_total_payment() const {
  double total = 0.0;
  for (std::size_t i = 0; i < payments.size(); ++i) {
    total += expected_payment(static_cast<int>(i));
  }
  return total;
}

CepSolution solve_optimal_cep(const NormalFormGame& game,
                              const Eigen::VectorXd& principal_utility,
                              double epsilon, double payment_cap) {
  check_cep_inputs(game, principal_utility, epsilon);
  if (!(payment_cap >= 0.0)) {
    throw std::invalid_argument("cep: payment cap must be nonnegative");
  }
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;

  LpProblem lp;
  std::vector<int> mu_var(num_profiles);
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    mu_var[a] = lp.add_variable(principal_utility(a));
  }
  std::vector<std::vector<int>> q_var(n), slack_var(n);
  for (int i = 0; i < n; ++i) {
    if (payment_cap > 0.0) {
      for (int ai = 0; ai < game.action_counts[i]; ++ai) {
        q_var[i].push_back(lp.add_variable(-1.0));
      }
    }
    if (epsilon > 0.0) {
      for (int ai = 0; ai < game.action_counts[i]; ++ai) {
        slack_var[i].push_back(lp.add_variable(0.0));
      }
    }
  }

  {
    std::vector<std::pair<int, double>> terms;
    for (std::int64_t a = 0; a < num_profiles; ++a) terms.push_back({mu_var[a], 1.0});
    lp.add_row(terms, '=', 1.0);
  }

  for (int i = 0; i < n; ++i) {
    OpponentIndexer indexer(game.action_counts, i);
    const int m = game.action_counts[i];
    for (int ai = 0; ai < m; ++ai) {
      if (payment_cap > 0.0) {
        // Q_i(a_i) <= cap * marginal probability of a_i.
        std::vector<std::pair<int, double>> terms;
        terms.push_back({q_var[i][ai], 1.0});
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          terms.push_back({mu_var[indexer.joint_index(opp, ai)], -payment_cap});
        }
        lp.add_row(terms, '<', 0.0);
      }
      for (int dev = 0; dev < m; ++dev) {
        if (dev == ai) continue;
        std::vector<std::pair<int, double>> terms;
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          const std::int64_t rec = indexer.joint_index(opp, ai);
          const std::int64_t alt = indexer.joint_index(opp, dev);
          const double coeff = game.utilities[i](rec) - game.utilities[i](alt);
          if (coeff != 0.0) terms.push_back({mu_var[rec], coeff});
        }
        if (payment_cap > 0.0) terms.push_back({q_var[i][ai], 1.0});
        if (epsilon > 0.0) terms.push_back({slack_var[i][ai], 1.0});
        if (!terms.empty()) lp.add_row(terms, '>', 0.0);
      }
    }
    if (epsilon > 0.0) {
      std::vector<std::pair<int, double>> terms;
      for (int ai = 0; ai < m; ++ai) terms.push_back({slack_var[i][ai], 1.0});
      lp.add_row(terms, '<', epsilon);
    }
  }

  const LpSolution sol = lp.maximize();
  if (sol.status != LpStatus::Optimal) {
    throw std::runtime_error(std::string("optimal-cep: solver returned ") +
                             to_string(sol.status));
  }

  CepSolution out;
  out.mu = Eigen::VectorXd::Zero(num_profiles);
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    out.mu(a) = std::max(0.0, sol.x(mu_var[a]));
  }
  out.payments.assign(n, Eigen::MatrixXd::Zero(num_profiles, num_profiles));
  if (payment_cap > 0.0) {
    for (int i = 0; i < n; ++i) {
      OpponentIndexer indexer(game.action_counts, i);
      for (int ai = 0; ai < game.action_counts[i]; ++ai) {
        double marginal = 0.0;
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          marginal += out.mu(indexer.joint_index(opp, ai));
        }
        double rate = 0.0;
        if (marginal > 1e-12) {
          rate = std::min(payment_cap, std::max(0.0, sol.x(q_var[i][ai]) / marginal));
        }
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          const std::int64_t a = indexer.joint_index(opp, ai);
          out.payments[i](a, a) = rate;
        }
      }
    }
  }
  out.epsilon = epsilon;
  out.objective = sol.objective;
  return out;
}

CepReport verify_cep(const NormalFormGame& game,
                     const Eigen::VectorXd& principal_utility,
                     const CepSolution& sol) {
  check_cep_inputs(game, principal_utility, std::max(0.0, sol.epsilon));
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;
  if (sol.mu.size() != num_profiles ||
      sol.payments.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("verify_cep: solution shape does not match game");
  }
  for (const auto& table : sol.payments) {
    if (table.rows() != num_profiles || table.cols() != num_profiles) {
      throw std::invalid_argument("verify_cep: payment table shape mismatch");
    }
  }

  CepReport report;
  report.violation_per_agent.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    OpponentIndexer indexer(game.action_counts, i);
    const int m = game.action_counts[i];
    double total_gain = 0.0;
    for (int ai = 0; ai < m; ++ai) {
      double best = 0.0;  // the identity deviation gains zero
      for (int dev = 0; dev < m; ++dev) {
        if (dev == ai) continue;
        double gain = 0.0;
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          const std::int64_t rec = indexer.joint_index(opp, ai);
          const std::int64_t alt = indexer.joint_index(opp, dev);
          gain += sol.mu(rec) *
                  (game.utilities[i](alt) + sol.payments[i](rec, alt) -
                   game.utilities[i](rec) - sol.payments[i](rec, rec));
        }
        best = std::max(best, gain);
      }
      total_gain += best;
    }
    report.violation_per_agent[i] = total_gain;
    report.max_violation = std::max(report.max_violation, total_gain);
  }

  double paid = 0.0;
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    for (int i = 0; i < n; ++i) paid += sol.mu(a) * sol.payments[i](a, a);
  }
  report.expected_total_payment = paid;
  report.objective = sol.mu.dot(principal_utility) - paid;
  report.passes = report.max_violation <= sol.epsilon + 1e-6;
  return report;
}

// ---------------------------------------------------------------------------
// Signal-independent payments: spatial branch-and-bound.
//
// Decision variables are mu over profiles and p_i(a) in [0, cap]. Incentive
// rows contain products mu(a) * p_i(b) where b is a with agent i's action
// replaced, and the objective contains mu(a) * p_i(a). Each product gets an
// auxiliary variable constrained by its McCormick envelope over the current
// box; branching shrinks the box until the envelope is tight enough.
// ---------------------------------------------------------------------------

namespace {

struct ProductMap {
  // z index for (agent i, profile a, replacement action k): off[i] + a*m_i + k.
  std::vector<int> off;
  std::vector<std::int64_t> sibling;  // profile a with slot i replaced by k
  int total = 0;

  ProductMap(const NormalFormGame& game) {
    const std::int64_t num_profiles = game.num_profiles();
    off.resize(game.num_agents);
    for (int i = 0; i < game.num_agents; ++i) {
      off[i] = total;
      total += static_cast<int>(num_profiles) * game.action_counts[i];
    }
    sibling.resize(total);
    for (int i = 0; i < game.num_agents; ++i) {
      const std::int64_t stride = game.stride(i);
      const int m = game.action_counts[i];
      for (std::int64_t a = 0; a < num_profiles; ++a) {
        const int own = static_cast<int>((a / stride) % m);
        for (int k = 0; k < m; ++k) {
          sibling[index(i, a, k, m)] = a + (k - own) * stride;
        }
      }
    }
  }

  int index(int i, std::int64_t a, int k, int m) const {
    return off[i] + static_cast<int>(a) * m + k;
  }
};

struct Box {
  Eigen::VectorXd mu_lo, mu_hi;  // per profile
  Eigen::VectorXd p_lo, p_hi;    // per (agent, profile), flattened i*P + a
};

struct BnbNode {
  Box box;
  double bound = std::numeric_limits<double>::infinity();
};

struct NodeOrder {
  bool operator()(const BnbNode& a, const BnbNode& b) const {
    return a.bound < b.bound;
  }
};

struct RelaxationPoint {
  LpStatus status = LpStatus::Infeasible;
  double bound = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd mu;
  Eigen::VectorXd p;
  Eigen::VectorXd z;
};

double bilinear_value(const Eigen::VectorXd& principal_utility,
                      const Eigen::VectorXd& mu, const Eigen::VectorXd& p, int n) {
  const Eigen::Index num_profiles = mu.size();
  double value = mu.dot(principal_utility);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index a = 0; a < num_profiles; ++a) {
      value -= mu(a) * p(i * num_profiles + a);
    }
  }
  return value;
}

// Incentive rows with either side fixed are linear; these two steps alternate
// to turn relaxation points into feasible incumbents.
std::optional<Eigen::VectorXd> solve_mu_step(const NormalFormGame& game,
                                             const Eigen::VectorXd& principal_utility,
                                             double epsilon, const Eigen::VectorXd& p) {
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;
  LpProblem lp;
  std::vector<int> mu_var(num_profiles);
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    double coeff = principal_utility(a);
    for (int i = 0; i < n; ++i) coeff -= p(i * num_profiles + a);
    mu_var[a] = lp.add_variable(coeff);
  }
  std::vector<std::vector<int>> slack_var(n);
  if (epsilon > 0.0) {
    for (int i = 0; i < n; ++i) {
      for (int ai = 0; ai < game.action_counts[i]; ++ai) {
        slack_var[i].push_back(lp.add_variable(0.0));
      }
    }
  }
  {
    std::vector<std::pair<int, double>> terms;
    for (std::int64_t a = 0; a < num_profiles; ++a) terms.push_back({mu_var[a], 1.0});
    lp.add_row(terms, '=', 1.0);
  }
  for (int i = 0; i < n; ++i) {
    OpponentIndexer indexer(game.action_counts, i);
    const int m = game.action_counts[i];
    for (int ai = 0; ai < m; ++ai) {
      for (int dev = 0; dev < m; ++dev) {
        if (dev == ai) continue;
        std::vector<std::pair<int, double>> terms;
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          const std::int64_t rec = indexer.joint_index(opp, ai);
          const std::int64_t alt = indexer.joint_index(opp, dev);
          const double coeff = game.utilities[i](rec) + p(i * num_profiles + rec) -
                               game.utilities[i](alt) - p(i * num_profiles + alt);
          if (coeff != 0.0) terms.push_back({mu_var[rec], coeff});
        }
        if (epsilon > 0.0) terms.push_back({slack_var[i][ai], 1.0});
        if (!terms.empty()) lp.add_row(terms, '>', 0.0);
      }
    }
    if (epsilon > 0.0) {
      std::vector<std::pair<int, double>> terms;
      for (int ai = 0; ai < m; ++ai) terms.push_back({slack_var[i][ai], 1.0});
      lp.add_row(terms, '<', epsilon);
    }
  }
  const LpSolution sol = lp.maximize();
  if (sol.status != LpStatus::Optimal) return std::nullopt;
  Eigen::VectorXd mu(num_profiles);
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    mu(a) = std::max(0.0, sol.x(mu_var[a]));
  }
  return mu;
}

// minimize_mass = false: maximize the objective over p at fixed mu.
// minimize_mass = true: minimize total payment mass while keeping the
// objective at least value_floor (used to strip cap-parked junk from
// profiles the distribution never plays).
std::optional<Eigen::VectorXd> solve_p_step(const NormalFormGame& game,
                                            const Eigen::VectorXd& principal_utility,
                                            double epsilon, double cap,
                                            const Eigen::VectorXd& mu,
                                            bool minimize_mass = false,
                                            double value_floor = 0.0) {
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;
  LpProblem lp;
  std::vector<int> p_var(n * num_profiles);
  for (int i = 0; i < n; ++i) {
    for (std::int64_t a = 0; a < num_profiles; ++a) {
      const double coeff = minimize_mass ? -1.0 : -mu(a);
      p_var[i * num_profiles + a] = lp.add_variable(coeff, 0.0, cap);
    }
  }
  std::vector<std::vector<int>> slack_var(n);
  if (epsilon > 0.0) {
    for (int i = 0; i < n; ++i) {
      for (int ai = 0; ai < game.action_counts[i]; ++ai) {
        slack_var[i].push_back(lp.add_variable(0.0));
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    OpponentIndexer indexer(game.action_counts, i);
    const int m = game.action_counts[i];
    for (int ai = 0; ai < m; ++ai) {
      for (int dev = 0; dev < m; ++dev) {
        if (dev == ai) continue;
        std::vector<std::pair<int, double>> terms;
        double constant = 0.0;
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          const std::int64_t rec = indexer.joint_index(opp, ai);
          const std::int64_t alt = indexer.joint_index(opp, dev);
          constant += mu(rec) * (game.utilities[i](rec) - game.utilities[i](alt));
          if (mu(rec) != 0.0) {
            terms.push_back({p_var[i * num_profiles + rec], mu(rec)});
            terms.push_back({p_var[i * num_profiles + alt], -mu(rec)});
          }
        }
        if (epsilon > 0.0) terms.push_back({slack_var[i][ai], 1.0});
        if (!terms.empty() || constant < 0.0) lp.add_row(terms, '>', -constant);
      }
    }
    if (epsilon > 0.0) {
      std::vector<std::pair<int, double>> terms;
      for (int ai = 0; ai < m; ++ai) terms.push_back({slack_var[i][ai], 1.0});
      lp.add_row(terms, '<', epsilon);
    }
  }
  if (minimize_mass) {
    // sum_a mu(a) (U0(a) - sum_i p_i(a)) >= value_floor
    std::vector<std::pair<int, double>> terms;
    for (int i = 0; i < n; ++i) {
      for (std::int64_t a = 0; a < num_profiles; ++a) {
        if (mu(a) != 0.0) terms.push_back({p_var[i * num_profiles + a], -mu(a)});
      }
    }
    lp.add_row(terms, '>', value_floor - mu.dot(principal_utility));
  }
  const LpSolution sol = lp.maximize();
  if (sol.status != LpStatus::Optimal) return std::nullopt;
  Eigen::VectorXd p(n * num_profiles);
  for (int v = 0; v < n * static_cast<int>(num_profiles); ++v) {
    p(v) = std::min(cap, std::max(0.0, sol.x(p_var[v])));
  }
  return p;
}

struct Incumbent {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd mu;
  Eigen::VectorXd p;
  bool valid = false;
};

void polish_incumbent(const NormalFormGame& game,
                      const Eigen::VectorXd& principal_utility, double epsilon,
                      double cap, Eigen::VectorXd p, Incumbent& incumbent) {
  const int n = game.num_agents;
  for (Eigen::Index v = 0; v < p.size(); ++v) {
    p(v) = std::min(cap, std::max(0.0, p(v)));
  }
  for (int pass = 0; pass < 2; ++pass) {
    auto mu = solve_mu_step(game, principal_utility, epsilon, p);
    if (!mu) return;
    double value = bilinear_value(principal_utility, *mu, p, n);
    if (value > incumbent.value + 1e-12) {
      incumbent = {value, *mu, p, true};
    }
    auto next_p = solve_p_step(game, principal_utility, epsilon, cap, *mu);
    if (!next_p) return;
    p = *next_p;
    value = bilinear_value(principal_utility, *mu, p, n);
    if (value > incumbent.value + 1e-12) {
      incumbent = {value, *mu, p, true};
    }
  }
}

RelaxationPoint solve_relaxation(const NormalFormGame& game,
                                 const Eigen::VectorXd& principal_utility,
                                 double epsilon, const ProductMap& products,
                                 const Box& box) {
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;
  LpProblem lp;
  std::vector<int> mu_var(num_profiles);
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    mu_var[a] = lp.add_variable(principal_utility(a), box.mu_lo(a), box.mu_hi(a));
  }
  std::vector<int> p_var(n * num_profiles);
  for (int v = 0; v < n * static_cast<int>(num_profiles); ++v) {
    p_var[v] = lp.add_variable(0.0, box.p_lo(v), box.p_hi(v));
  }
  std::vector<int> z_var(products.total);
  for (int i = 0; i < n; ++i) {
    const int m = game.action_counts[i];
    const std::int64_t stride = game.stride(i);
    for (std::int64_t a = 0; a < num_profiles; ++a) {
      const int own = static_cast<int>((a / stride) % m);
      for (int k = 0; k < m; ++k) {
        const int zi = products.index(i, a, k, m);
        // Only the diagonal products (k == own action) carry objective mass.
        z_var[zi] = lp.add_variable(k == own ? -1.0 : 0.0);
      }
    }
  }
  std::vector<std::vector<int>> slack_var(n);
  if (epsilon > 0.0) {
    for (int i = 0; i < n; ++i) {
      for (int ai = 0; ai < game.action_counts[i]; ++ai) {
        slack_var[i].push_back(lp.add_variable(0.0));
      }
    }
  }

  {
    std::vector<std::pair<int, double>> terms;
    for (std::int64_t a = 0; a < num_profiles; ++a) terms.push_back({mu_var[a], 1.0});
    lp.add_row(terms, '=', 1.0);
  }

  // McCormick envelope rows for every product z = mu(a) * p_i(b).
  for (int i = 0; i < n; ++i) {
    const int m = game.action_counts[i];
    for (std::int64_t a = 0; a < num_profiles; ++a) {
      for (int k = 0; k < m; ++k) {
        const int zi = products.index(i, a, k, m);
        const std::int64_t b = products.sibling[zi];
        const int pv = p_var[i * num_profiles + b];
        const double xl = box.mu_lo(a), xu = box.mu_hi(a);
        const double yl = box.p_lo(i * num_profiles + b), yu = box.p_hi(i * num_profiles + b);
        lp.add_row({{z_var[zi], 1.0}, {pv, -xl}, {mu_var[a], -yl}}, '>', -xl * yl);
        lp.add_row({{z_var[zi], 1.0}, {pv, -xu}, {mu_var[a], -yu}}, '>', -xu * yu);
        lp.add_row({{z_var[zi], 1.0}, {pv, -xu}, {mu_var[a], -yl}}, '<', -xu * yl);
        lp.add_row({{z_var[zi], 1.0}, {pv, -xl}, {mu_var[a], -yu}}, '<', -xl * yu);
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    OpponentIndexer indexer(game.action_counts, i);
    const int m = game.action_counts[i];
    for (int ai = 0; ai < m; ++ai) {
      for (int dev = 0; dev < m; ++dev) {
        if (dev == ai) continue;
        std::vector<std::pair<int, double>> terms;
        for (std::int64_t opp = 0; opp < indexer.count(); ++opp) {
          const std::int64_t rec = indexer.joint_index(opp, ai);
          const double coeff = game.utilities[i](rec) - game.utilities[i](indexer.joint_index(opp, dev));
          if (coeff != 0.0) terms.push_back({mu_var[rec], coeff});
          terms.push_back({z_var[products.index(i, rec, ai, m)], 1.0});
          terms.push_back({z_var[products.index(i, rec, dev, m)], -1.0});
        }
        if (epsilon > 0.0) terms.push_back({slack_var[i][ai], 1.0});
        lp.add_row(terms, '>', 0.0);
      }
    }
    if (epsilon > 0.0) {
      std::vector<std::pair<int, double>> terms;
      for (int ai = 0; ai < m; ++ai) terms.push_back({slack_var[i][ai], 1.0});
      lp.add_row(terms, '<', epsilon);
    }
  }

  const LpSolution sol = lp.maximize();
  RelaxationPoint point;
  point.status = sol.status;
  if (sol.status != LpStatus::Optimal) return point;
  point.bound = sol.objective;
  point.mu.resize(num_profiles);
  for (std::int64_t a = 0; a < num_profiles; ++a) point.mu(a) = sol.x(mu_var[a]);
  point.p.resize(n * num_profiles);
  for (int v = 0; v < n * static_cast<int>(num_profiles); ++v) point.p(v) = sol.x(p_var[v]);
  point.z.resize(products.total);
  for (int zi = 0; zi < products.total; ++zi) point.z(zi) = sol.x(z_var[zi]);
  return point;
}

double split_point(double value, double lo, double hi) {
  const double width = hi - lo;
  return std::min(hi - 0.2 * width, std::max(lo + 0.2 * width, value));
}

}  // namespace

CepSolution solve_optimal_cep_signal_independent(const NormalFormGame& game,
                                                 const Eigen::VectorXd& principal_utility,
                                                 double epsilon) {
  check_cep_inputs(game, principal_utility, epsilon);
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;
  const double cap = kSignalIndependentCap;
  const ProductMap products(game);

  Incumbent incumbent;
  polish_incumbent(game, principal_utility, epsilon, cap,
                   Eigen::VectorXd::Zero(n * num_profiles), incumbent);
  if (!incumbent.valid) {
    throw std::runtime_error("signal-independent cep: no feasible start (every finite game has a correlated equilibrium)");
  }

  std::priority_queue<BnbNode, std::vector<BnbNode>, NodeOrder> open;
  BnbNode root;
  root.box.mu_lo = Eigen::VectorXd::Zero(num_profiles);
  root.box.mu_hi = Eigen::VectorXd::Ones(num_profiles);
  root.box.p_lo = Eigen::VectorXd::Zero(n * num_profiles);
  root.box.p_hi = Eigen::VectorXd::Constant(n * num_profiles, cap);
  open.push(std::move(root));

  int nodes = 0;
  while (!open.empty()) {
    BnbNode node = open.top();
    open.pop();
    if (node.bound <= incumbent.value + kCertifiedGap) break;
    if (++nodes > kNodeLimit) {
      throw std::runtime_error("signal-independent cep: node budget exhausted before certification");
    }

    const RelaxationPoint point =
        solve_relaxation(game, principal_utility, epsilon, products, node.box);
    if (point.status == LpStatus::Infeasible) continue;
    if (point.status != LpStatus::Optimal) {
      throw std::runtime_error(std::string("signal-independent cep: relaxation returned ") +
                               to_string(point.status));
    }
    if (point.bound <= incumbent.value + kCertifiedGap) continue;

    polish_incumbent(game, principal_utility, epsilon, cap, point.p, incumbent);
    if (point.bound <= incumbent.value + kCertifiedGap) continue;

    // Find the product whose envelope is loosest at the relaxation point.
    int worst = -1;
    double worst_violation = 0.0;
    for (int i = 0; i < n; ++i) {
      const int m = game.action_counts[i];
      for (std::int64_t a = 0; a < num_profiles; ++a) {
        for (int k = 0; k < m; ++k) {
          const int zi = products.index(i, a, k, m);
          const std::int64_t b = products.sibling[zi];
          const double violation =
              std::abs(point.z(zi) - point.mu(a) * point.p(i * num_profiles + b));
          if (violation > worst_violation) {
            worst_violation = violation;
            worst = zi;
          }
        }
      }
    }
    if (worst < 0 || worst_violation <= 1e-10) {
      // The relaxation point itself satisfies every product: it is feasible
      // for the bilinear problem and matches the node bound, so the node's
      // subtree is solved.
      const double value = bilinear_value(principal_utility, point.mu, point.p, n);
      if (value > incumbent.value + 1e-12) {
        incumbent = {value, point.mu, point.p, true};
      }
      continue;
    }

    // Recover (i, a, b) for the worst product and branch on the wider side.
    int agent = n - 1;
    while (products.off[agent] > worst) --agent;
    const int m = game.action_counts[agent];
    const std::int64_t a = (worst - products.off[agent]) / m;
    const std::int64_t b = products.sibling[worst];
    const int pv = agent * static_cast<int>(num_profiles) + static_cast<int>(b);
    const double mu_width = node.box.mu_hi(a) - node.box.mu_lo(a);
    const double p_width = (node.box.p_hi(pv) - node.box.p_lo(pv)) / cap;

    BnbNode left = node, right = node;
    left.bound = right.bound = point.bound;
    if (mu_width >= p_width) {
      const double t = split_point(point.mu(a), node.box.mu_lo(a), node.box.mu_hi(a));
      left.box.mu_hi(a) = t;
      right.box.mu_lo(a) = t;
    } else {
      const double t = split_point(point.p(pv), node.box.p_lo(pv), node.box.p_hi(pv));
      left.box.p_hi(pv) = t;
      right.box.p_lo(pv) = t;
    }
    open.push(std::move(left));
    open.push(std::move(right));
  }

  // Strip payment mass the objective never sees (for example on profiles the
  // distribution does not play), keeping the certified value.
  auto cleaned = solve_p_step(game, principal_utility, epsilon, cap, incumbent.mu,
                              true, incumbent.value - 1e-9);
  if (cleaned) {
    const double value = bilinear_value(principal_utility, incumbent.mu, *cleaned, n);
    if (value >= incumbent.value - 1e-8) {
      incumbent.p = *cleaned;
      incumbent.value = value;
    }
  }

  CepSolution out;
  out.mu = incumbent.mu;
  out.payments.assign(n, Eigen::MatrixXd::Zero(num_profiles, num_profiles));
  for (int i = 0; i < n; ++i) {
    for (std::int64_t s = 0; s < num_profiles; ++s) {
      for (std::int64_t a = 0; a < num_profiles; ++a) {
        out.payments[i](s, a) = incumbent.p(i * num_profiles + a);
      }
    }
  }
  out.epsilon = epsilon;
  out.objective = incumbent.value;
  return out;
}

// ---------------------------------------------------------------------------
// Non-canonical form and the revelation-principle pushforward.
// ---------------------------------------------------------------------------

namespace {

void check_general_cep(const NormalFormGame& game, const GeneralCep& cep) {
  const int n = game.num_agents;
  if (cep.signal_counts.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("general cep: one signal count per agent required");
  }
  for (int c : cep.signal_counts) {
    if (c < 1) throw std::invalid_argument("general cep: signal counts must be positive");
  }
  const std::int64_t num_signals = signal_profile_count(cep);
  const std::int64_t num_profiles = game.num_profiles();
  if (cep.mu.size() != num_signals) {
    throw std::invalid_argument("general cep: mu must cover every joint signal profile");
  }
  if (cep.mu.minCoeff() < -1e-12 || std::abs(cep.mu.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("general cep: mu must be a probability distribution");
  }
  if (cep.payments.size() != static_cast<std::size_t>(n) ||
      cep.strategies.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("general cep: one payment table and strategy per agent");
  }
  for (int i = 0; i < n; ++i) {
    if (cep.payments[i].rows() != num_signals || cep.payments[i].cols() != num_profiles) {
      throw std::invalid_argument("general cep: payment tables are |S| x |A|");
    }
    if (cep.payments[i].minCoeff() < -1e-12) {
      throw std::invalid_argument("general cep: payments must be nonnegative");
    }
    if (cep.strategies[i].rows() != cep.signal_counts[i] ||
        cep.strategies[i].cols() != game.action_counts[i]) {
      throw std::invalid_argument("general cep: strategy tables are S_i x A_i");
    }
    for (Eigen::Index s = 0; s < cep.strategies[i].rows(); ++s) {
      if (cep.strategies[i].row(s).minCoeff() < -1e-12 ||
          std::abs(cep.strategies[i].row(s).sum() - 1.0) > 1e-9) {
        throw std::invalid_argument("general cep: strategy rows must be distributions");
      }
    }
  }
}

std::vector<int> decode_profile(std::int64_t index, const std::vector<int>& counts) {
  std::vector<int> profile(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    profile[i] = static_cast<int>(index % counts[i]);
    index /= counts[i];
  }
  return profile;
}

}  // namespace

std::int64_t signal_profile_count(const GeneralCep& cep) {
  std::int64_t total = 1;
  for (int c : cep.signal_counts) total *= c;
  return total;
}

double general_cep_objective(const NormalFormGame& game,
                             const Eigen::VectorXd& principal_utility,
                             const GeneralCep& cep) {
  check_general_cep(game, cep);
  if (principal_utility.size() != game.num_profiles()) {
    throw std::invalid_argument("general cep: principal utility size mismatch");
  }
  const std::int64_t num_signals = signal_profile_count(cep);
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;
  double value = 0.0;
  for (std::int64_t s = 0; s < num_signals; ++s) {
    if (cep.mu(s) == 0.0) continue;
    const std::vector<int> sig = decode_profile(s, cep.signal_counts);
    for (std::int64_t a = 0; a < num_profiles; ++a) {
      const std::vector<int> act = game.profile_of(a);
      double weight = 1.0;
      for (int i = 0; i < n && weight != 0.0; ++i) {
        weight *= cep.strategies[i](sig[i], act[i]);
      }
      if (weight == 0.0) continue;
      double paid = 0.0;
      for (int i = 0; i < n; ++i) paid += cep.payments[i](s, a);
      value += cep.mu(s) * weight * (principal_utility(a) - paid);
    }
  }
  return value;
}

std::vector<double> general_cep_violations(const NormalFormGame& game,
                                           const GeneralCep& cep) {
  check_general_cep(game, cep);
  const std::int64_t num_signals = signal_profile_count(cep);
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;
  std::vector<double> violations(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const int m_sig = cep.signal_counts[i];
    const int m_act = game.action_counts[i];
    // follow(s_i): expected payoff of playing the strategy; dev(s_i, b):
    // expected payoff of overriding to b whenever the signal is s_i.
    Eigen::VectorXd follow = Eigen::VectorXd::Zero(m_sig);
    Eigen::MatrixXd dev = Eigen::MatrixXd::Zero(m_sig, m_act);
    for (std::int64_t s = 0; s < num_signals; ++s) {
      if (cep.mu(s) == 0.0) continue;
      const std::vector<int> sig = decode_profile(s, cep.signal_counts);
      for (std::int64_t a = 0; a < num_profiles; ++a) {
        const std::vector<int> act = game.profile_of(a);
        double others = cep.mu(s);
        for (int j = 0; j < n && others != 0.0; ++j) {
          if (j != i) others *= cep.strategies[j](sig[j], act[j]);
        }
        if (others == 0.0) continue;
        const double payoff = game.utilities[i](a) + cep.payments[i](s, a);
        dev(sig[i], act[i]) += others * payoff;
        follow(sig[i]) += others * cep.strategies[i](sig[i], act[i]) * payoff;
      }
    }
    double total = 0.0;
    for (int si = 0; si < m_sig; ++si) {
      total += std::max(0.0, dev.row(si).maxCoeff() - follow(si));
    }
    violations[i] = total;
  }
  return violations;
}

CepSolution canonicalize_cep(const NormalFormGame& game,
                             const Eigen::VectorXd& principal_utility,
                             const GeneralCep& input) {
  check_general_cep(game, input);
  if (principal_utility.size() != game.num_profiles()) {
    throw std::invalid_argument("canonicalize: principal utility size mismatch");
  }
  const std::int64_t num_signals = signal_profile_count(input);
  const std::int64_t num_profiles = game.num_profiles();
  const int n = game.num_agents;

  Eigen::VectorXd mu_out = Eigen::VectorXd::Zero(num_profiles);
  std::vector<Eigen::MatrixXd> numer(n, Eigen::MatrixXd::Zero(num_profiles, num_profiles));
  for (std::int64_t s = 0; s < num_signals; ++s) {
    if (input.mu(s) == 0.0) continue;
    const std::vector<int> sig = decode_profile(s, input.signal_counts);
    for (std::int64_t a = 0; a < num_profiles; ++a) {
      const std::vector<int> act = game.profile_of(a);
      double weight = input.mu(s);
      for (int i = 0; i < n && weight != 0.0; ++i) {
        weight *= input.strategies[i](sig[i], act[i]);
      }
      if (weight == 0.0) continue;
      mu_out(a) += weight;
      for (int i = 0; i < n; ++i) {
        numer[i].row(a) += weight * input.payments[i].row(s);
      }
    }
  }

  CepSolution out;
  out.mu = mu_out;
  out.payments.assign(n, Eigen::MatrixXd::Zero(num_profiles, num_profiles));
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    if (mu_out(a) > 1e-15) {
      for (int i = 0; i < n; ++i) out.payments[i].row(a) = numer[i].row(a) / mu_out(a);
    }
  }
  out.epsilon = input.epsilon;
  double paid = 0.0;
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    for (int i = 0; i < n; ++i) paid += numer[i](a, a);
  }
  out.objective = mu_out.dot(principal_utility) - paid;
  return out;
}

std::string cep_to_json(const CepSolution& sol) {
  const std::int64_t num_profiles = sol.mu.size();
  const int n = static_cast<int>(sol.payments.size());
  bool diagonal_only = true;
  for (const auto& table : sol.payments) {
    for (Eigen::Index s = 0; s < table.rows() && diagonal_only; ++s) {
      for (Eigen::Index a = 0; a < table.cols(); ++a) {
        if (s != a && std::abs(table(s, a)) > 1e-15) {
          diagonal_only = false;
          break;
        }
      }
    }
  }
  std::ostringstream os;
  os << "{\"mu\":[";
  for (std::int64_t a = 0; a < num_profiles; ++a) {
    if (a) os << ",";
    os << fmt_double(sol.mu(a));
  }
  os << "],\"payments\":[";
  for (int i = 0; i < n; ++i) {
    if (i) os << ",";
    os << "[";
    for (std::int64_t a = 0; a < num_profiles; ++a) {
      if (a) os << ",";
      os << fmt_double(sol.payments[i](a, a));
    }
    os << "]";
  }
  os << "],\"epsilon\":" << fmt_double(sol.epsilon)
     << ",\"objective\":" << fmt_double(sol.objective);
  if (!diagonal_only) {
    os << ",\"payments_full\":[";
    for (int i = 0; i < n; ++i) {
      if (i) os << ",";
      os << "[";
      for (Eigen::Index s = 0; s < num_profiles; ++s) {
        if (s) os << ",";
        os << "[";
        for (Eigen::Index a = 0; a < num_profiles; ++a) {
          if (a) os << ",";
          os << fmt_double(sol.payments[i](s, a));
        }
        os << "]";
      }
      os << "]";
    }
    os << "]";
  }
  os << "}";
  return os.str();
}

CepSolution cep_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  CepSolution sol;
  const auto& mu = doc.at("mu");
  const std::int64_t num_profiles = static_cast<std::int64_t>(mu.size());
  sol.mu.resize(num_profiles);
  for (std::int64_t a = 0; a < num_profiles; ++a) sol.mu(a) = mu.at(a).get<double>();
  sol.epsilon = doc.at("epsilon").get<double>();
  sol.objective = doc.at("objective").get<double>();
  if (doc.contains("payments_full")) {
    for (const auto& table : doc.at("payments_full")) {
      Eigen::MatrixXd full(num_profiles, num_profiles);
      for (std::int64_t s = 0; s < num_profiles; ++s) {
        for (std::int64_t a = 0; a < num_profiles; ++a) {
          full(s, a) = table.at(s).at(a).get<double>();
        }
      }
      sol.payments.push_back(std::move(full));
    }
  } else {
    for (const auto& diag : doc.at("payments")) {
      Eigen::MatrixXd full = Eigen::MatrixXd::Zero(num_profiles, num_profiles);
      for (std::int64_t a = 0; a < num_profiles; ++a) {
        full(a, a) = diag.at(a).get<double>();
      }
      sol.payments.push_back(std::move(full));
    }
  }
  return sol;
}

}  // namespace steerlab
