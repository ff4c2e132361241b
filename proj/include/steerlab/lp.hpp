#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace steerlab {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::IterationLimit;
  double objective = 0.0;   // value of the maximization objective at x
  Eigen::VectorXd x;        // one entry per added variable
  long iterations = 0;
  // max over rows and bounds of the constraint violation at x; optimal
  // solutions keep this at or below 1e-8
  double max_violation = 0.0;
};

// Dense linear program, built incrementally and solved by a two-phase
// primal simplex on the full tableau. Intended for the problem sizes this
// project actually produces (tens of variables, low hundreds of rows), where
// a dense deterministic method beats pulling in a solver dependency.
//
// Determinism: entering variable is the most negative reduced cost with
// lowest index on ties (Dantzig), the leaving row is the ratio-test minimum
// with lowest basis index on ties, and after a fixed iteration budget the
// pricing switches to Bland's rule, which cannot cycle. Two calls on the
// same problem return bit-identical solutions.
class LpProblem {
 public:
  // Adds a variable with the given maximization objective coefficient.
  // The lower bound must be finite; the upper bound may be infinity.
  int add_variable(double objective_coeff, double lower = 0.0,
                   double upper = std::numeric_limits<double>::infinity(),
                   std::string name = {});

  // sense is one of '<' (<=), '=' (==), '>' (>=). Duplicate variable entries
  // in terms are summed. Returns the row index.
  int add_row(const std::vector<std::pair<int, double>>& terms, char sense, double rhs,
              std::string name = {});

  int num_variables() const { return static_cast<int>(lower_.size()); }
  int num_rows() const { return static_cast<int>(rows_.size()); }
  const std::string& variable_name(int v) const { return names_[v]; }

  LpSolution maximize() const;

 private:
  struct Row {
    std::vector<std::pair<int, double>> terms;
    char sense;
    double rhs;
    std::string name;
  };

  std::vector<double> objective_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<std::string> names_;
  std::vector<Row> rows_;
};

}  // namespace steerlab
