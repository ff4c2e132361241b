#include "steerlab/lp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steerlab {

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

int LpProblem::add_variable(double objective_coeff, double lower, double upper,
                            std::string name) {
  if (!std::isfinite(lower)) {
    throw std::invalid_argument("LpProblem: lower bound must be finite");
  }
  if (upper < lower) {
    throw std::invalid_argument("LpProblem: upper bound below lower bound");
  }
  objective_.push_back(objective_coeff);
  lower_.push_back(lower);
  upper_.push_back(upper);
  if (name.empty()) name = "x" + std::to_string(lower_.size() - 1);
  names_.push_back(std::move(name));
  return static_cast<int>(lower_.size()) - 1;
}

int LpProblem::add_row(const std::vector<std::pair<int, double>>& terms, char sense,
                       double rhs, std::string name) {
  if (sense != '<' && sense != '=' && sense != '>') {
    throw std::invalid_argument("LpProblem: sense must be '<', '=' or '>'");
  }
  for (const auto& [v, c] : terms) {
    (void)c;
    if (v < 0 || v >= num_variables()) {
      throw std::invalid_argument("LpProblem: row references unknown variable");
    }
  }
  rows_.push_back(Row{terms, sense, rhs, std::move(name)});
  return static_cast<int>(rows_.size()) - 1;
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr double kFeasTol = 1e-8;

struct Tableau {
  Eigen::MatrixXd a;       // m x n
  Eigen::VectorXd b;       // m, kept nonnegative
  Eigen::RowVectorXd cost; // reduced costs, minimization convention
  std::vector<int> basis;  // m entries, column currently basic in each row

  void pivot(int row, int col) {
    const double piv = a(row, col);
    a.row(row) /= piv;
    b(row) /= piv;
    for (int i = 0; i < a.rows(); ++i) {
      if (i == row) continue;
      const double f = a(i, col);
      if (f != 0.0) {
        a.row(i) -= f * a.row(row);
        b(i) -= f * b(row);
        if (b(i) < 0.0 && b(i) > -1e-11) b(i) = 0.0;
      }
    }
    const double f = cost(col);
    if (f != 0.0) cost -= f * a.row(row);
    basis[row] = col;
  }
};

// Runs simplex iterations until optimality, unboundedness, or the iteration
// cap. Returns LpStatus::Optimal when no entering column remains.
LpStatus run_simplex(Tableau& t, long& iterations, long bland_after, long cap) {
  const int m = static_cast<int>(t.a.rows());
  const int n = static_cast<int>(t.a.cols());
  for (;;) {
    if (iterations >= cap) return LpStatus::IterationLimit;
    const bool bland = iterations >= bland_after;
    int enter = -1;
    if (bland) {
      for (int j = 0; j < n; ++j) {
        if (t.cost(j) < -kCostTol) {
          enter = j;
          break;
        }
      }
    } else {
      double best = -kCostTol;
      for (int j = 0; j < n; ++j) {
        if (t.cost(j) < best) {
          best = t.cost(j);
          enter = j;
        }
      }
    }
    if (enter < 0) return LpStatus::Optimal;

    int leave = -1;
    double best_ratio = 0.0;
    for (int i = 0; i < m; ++i) {
      const double aij = t.a(i, enter);
      if (aij > kPivotTol) {
        const double ratio = t.b(i) / aij;
        if (leave < 0 || ratio < best_ratio - 1e-12 ||
            (ratio <= best_ratio + 1e-12 && t.basis[i] < t.basis[leave])) {
          leave = i;
          best_ratio = ratio;
        }
      }
    }
    if (leave < 0) return LpStatus::Unbounded;
    t.pivot(leave, enter);
    ++iterations;
  }
}

// Recomputes the reduced-cost row for a cost vector c over all columns given
// the current basis (whose columns are unit vectors in the tableau).
void reduce_costs(Tableau& t, const Eigen::RowVectorXd& c) {
  t.cost = c;
  for (int i = 0; i < t.a.rows(); ++i) {
    const double cb = c(t.basis[i]);
    if (cb != 0.0) t.cost -= cb * t.a.row(i);
  }
}

}  // namespace

LpSolution LpProblem::maximize() const {
  const int n_user = num_variables();
  LpSolution sol;

  // Shift every variable to y = x - lower >= 0 and turn finite upper bounds
  // into explicit rows. Row right-hand sides are adjusted by the shift.
  struct NormRow {
    std::vector<std::pair<int, double>> terms;
    char sense;
    double rhs;
  };
  std::vector<NormRow> norm;
  norm.reserve(rows_.size() + static_cast<std::size_t>(n_user));
  for (const Row& r : rows_) {
    double rhs = r.rhs;
    for (const auto& [v, c] : r.terms) rhs -= c * lower_[v];
    norm.push_back(NormRow{r.terms, r.sense, rhs});
  }
  for (int v = 0; v < n_user; ++v) {
    if (std::isfinite(upper_[v])) {
      norm.push_back(NormRow{{{v, 1.0}}, '<', upper_[v] - lower_[v]});
    }
  }

  const int m = static_cast<int>(norm.size());
  // Column layout: user variables, then one slack/surplus per inequality
  // row, then artificials for rows that need them.
  int n_slack = 0;
  for (const NormRow& r : norm) {
    if (r.sense != '=') ++n_slack;
  }
  std::vector<int> slack_col(m, -1);
  std::vector<int> art_col(m, -1);
  int col = n_user;
  for (int i = 0; i < m; ++i) {
    if (norm[i].sense != '=') slack_col[i] = col++;
  }
  const int art_start = col;
  // Normalize rhs >= 0 first so we know which rows need artificials: a '<'
  // row with negative rhs flips to '>' and its slack becomes a surplus.
  std::vector<double> sign(m, 1.0);
  std::vector<char> sense(m);
  for (int i = 0; i < m; ++i) {
    sense[i] = norm[i].sense;
    if (norm[i].rhs < 0.0) {
      sign[i] = -1.0;
      if (sense[i] == '<') sense[i] = '>';
      else if (sense[i] == '>') sense[i] = '<';
    }
  }
  for (int i = 0; i < m; ++i) {
    if (sense[i] == '=' || sense[i] == '>') art_col[i] = col++;
  }
  const int n_total = col;

  Tableau t;
  t.a = Eigen::MatrixXd::Zero(m, n_total);
  t.b = Eigen::VectorXd::Zero(m);
  t.basis.assign(m, -1);
  for (int i = 0; i < m; ++i) {
    for (const auto& [v, c] : norm[i].terms) t.a(i, v) += sign[i] * c;
    t.b(i) = sign[i] * norm[i].rhs;
    if (slack_col[i] >= 0) t.a(i, slack_col[i]) = sense[i] == '<' ? 1.0 : -1.0;
    if (art_col[i] >= 0) {
      t.a(i, art_col[i]) = 1.0;
      t.basis[i] = art_col[i];
    } else {
      t.basis[i] = slack_col[i];
    }
  }

  const long bland_after = 1000 + 20L * (m + n_total);
  const long cap = 500000;
  long iterations = 0;

  // Phase 1: minimize the sum of artificials.
  if (art_start < n_total) {
    Eigen::RowVectorXd c1 = Eigen::RowVectorXd::Zero(n_total);
    for (int j = art_start; j < n_total; ++j) c1(j) = 1.0;
    reduce_costs(t, c1);
    const LpStatus st = run_simplex(t, iterations, bland_after, cap);
    if (st == LpStatus::IterationLimit) {
      sol.status = st;
      sol.iterations = iterations;
      return sol;
    }
    double art_sum = 0.0;
    for (int i = 0; i < m; ++i) {
      if (t.basis[i] >= art_start) art_sum += t.b(i);
    }
    if (art_sum > kFeasTol) {
      sol.status = LpStatus::Infeasible;
      sol.iterations = iterations;
      return sol;
    }
    // Pivot remaining artificials out of the basis; a row where that is
    // impossible is redundant and gets dropped.
    std::vector<int> keep;
    for (int i = 0; i < m; ++i) {
      if (t.basis[i] >= art_start) {
        int piv = -1;
        for (int j = 0; j < art_start; ++j) {
          if (std::abs(t.a(i, j)) > kPivotTol) {
            piv = j;
            break;
          }
        }
        if (piv >= 0) {
          t.pivot(i, piv);
          keep.push_back(i);
        }
      } else {
        keep.push_back(i);
      }
    }
    std::sort(keep.begin(), keep.end());
    if (static_cast<int>(keep.size()) < m) {
      Eigen::MatrixXd a2(keep.size(), art_start);
      Eigen::VectorXd b2(keep.size());
      std::vector<int> basis2;
      for (std::size_t r = 0; r < keep.size(); ++r) {
        a2.row(r) = t.a.row(keep[r]).head(art_start);
        b2(r) = t.b(keep[r]);
        basis2.push_back(t.basis[keep[r]]);
      }
      t.a = std::move(a2);
      t.b = std::move(b2);
      t.basis = std::move(basis2);
    } else {
      t.a.conservativeResize(Eigen::NoChange, art_start);
    }
  }

  // Phase 2: minimize -objective over the remaining columns.
  const int n2 = static_cast<int>(t.a.cols());
  Eigen::RowVectorXd c2 = Eigen::RowVectorXd::Zero(n2);
  for (int v = 0; v < n_user; ++v) c2(v) = -objective_[v];
  reduce_costs(t, c2);
  const LpStatus st = run_simplex(t, iterations, bland_after, cap);
  sol.iterations = iterations;
  if (st != LpStatus::Optimal) {
    sol.status = st;
    return sol;
  }

  sol.x = Eigen::VectorXd::Zero(n_user);
  for (int i = 0; i < t.a.rows(); ++i) {
    if (t.basis[i] < n_user) sol.x(t.basis[i]) = t.b(i);
  }
  for (int v = 0; v < n_user; ++v) sol.x(v) += lower_[v];

  sol.objective = 0.0;
  for (int v = 0; v < n_user; ++v) sol.objective += objective_[v] * sol.x(v);

  double viol = 0.0;
  for (const Row& r : rows_) {
    double lhs = 0.0;
    for (const auto& [v, c] : r.terms) lhs += c * sol.x(v);
    if (r.sense == '<') viol = std::max(viol, lhs - r.rhs);
    else if (r.sense == '>') viol = std::max(viol, r.rhs - lhs);
    else viol = std::max(viol, std::abs(lhs - r.rhs));
  }
  for (int v = 0; v < n_user; ++v) {
    viol = std::max(viol, lower_[v] - sol.x(v));
    if (std::isfinite(upper_[v])) viol = std::max(viol, sol.x(v) - upper_[v]);
  }
  sol.max_violation = viol;
  sol.status = LpStatus::Optimal;
  return sol;
}

}  // namespace steerlab
