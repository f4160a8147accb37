#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace tship {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Continuous, Binary };
enum class RowSense { LessEqual, GreaterEqual, Equal };

struct Variable {
  std::string name;
  double lo = 0.0;
  double hi = kInf;
  double cost = 0.0;
  VarKind kind = VarKind::Continuous;
};

struct Term {
  int var;
  double coef;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  RowSense sense = RowSense::LessEqual;
  double rhs = 0.0;
};

/// Minimization model: linear objective plus constant, linear rows, bounded
/// continuous and binary variables.
class MilpModel {
 public:
  int add_variable(std::string name, double lo, double hi, double cost, VarKind kind = VarKind::Continuous);
  int add_binary(std::string name, double cost) { return add_variable(std::move(name), 0.0, 1.0, cost, VarKind::Binary); }
  int add_constraint(std::string name, std::vector<Term> terms, RowSense sense, double rhs);
  void add_objective_constant(double c) { constant_ += c; }

  [[nodiscard]] const std::vector<Variable>& variables() const { return vars_; }
  [[nodiscard]] std::vector<Variable>& variables() { return vars_; }
  [[nodiscard]] const std::vector<Constraint>& constraints() const { return rows_; }
  [[nodiscard]] double objective_constant() const { return constant_; }
  [[nodiscard]] std::vector<int> binaries() const;
  [[nodiscard]] int find(std::string_view name) const;  // -1 if absent

  [[nodiscard]] double objective(const std::vector<double>& x) const;
  /// Largest bound or row violation of x.
  [[nodiscard]] double max_violation(const std::vector<double>& x) const;

  /// CPLEX LP text format, coefficients with 12 significant digits.
  void write_lp(std::ostream& out) const;

 private:
  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
  double constant_ = 0.0;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit, NodeLimit, Error };
std::string_view to_string(SolveStatus s);

struct SimplexOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  long max_iterations = 0;  // 0: 50 * (rows + columns)
};

struct LpSolution {
  SolveStatus status = SolveStatus::Error;
  double objective = kInf;
  std::vector<double> x;
  long iterations = 0;
};

/// LP relaxation (binaries treated as [lo, hi] continuous) by a bounded-variable
/// primal simplex on a dense tableau.
LpSolution solve_lp(const MilpModel& model, const SimplexOptions& options = {});
/// Same, with the model's variable bounds replaced by lo / hi.
LpSolution solve_lp(const MilpModel& model, const std::vector<double>& lo, const std::vector<double>& hi,
                    const SimplexOptions& options = {});

enum class BranchRule { PseudoCost, MostFractional };

struct BranchAndBoundOptions {
  double relative_gap = 1e-6;
  BranchRule branching = BranchRule::PseudoCost;
  long node_limit = 500000;
  SimplexOptions lp;
};

struct MilpSolution {
  SolveStatus status = SolveStatus::Error;
  double objective = kInf;
  double bound = -kInf;
  std::vector<double> x;
  long nodes = 0;  // branch nodes solved after the root
  long lp_solves = 0;
};

/// Best-first branch-and-bound on the binaries; ties by node creation order.
/// Branches on the fractional binary with the best pseudo-cost product score
/// (unseen directions use the running average), or the most fractional one.
MilpSolution branch_and_bound(const MilpModel& model, const BranchAndBoundOptions& options = {});

class MilpBackend {
 public:
  virtual ~MilpBackend() = default;
  [[nodiscard]] virtual MilpSolution solve(const MilpModel& model) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

class BuiltinBackend final : public MilpBackend {
 public:
  explicit BuiltinBackend(BranchAndBoundOptions options = {}) : options_(options) {}
  [[nodiscard]] MilpSolution solve(const MilpModel& model) const override { return branch_and_bound(model, options_); }
  [[nodiscard]] std::string name() const override { return "builtin"; }

 private:
  BranchAndBoundOptions options_;
};

/// Runs an external solver through files. `command` contains the placeholders
/// {lp} and {sol}; the solver reads the LP file and writes a solution file whose
/// first line is `status optimal|infeasible|unbounded` followed by `name value`
/// lines. Unlisted variables are zero.
class ExternalBackend final : public MilpBackend {
 public:
  explicit ExternalBackend(std::string command) : command_(std::move(command)) {}
  [[nodiscard]] MilpSolution solve(const MilpModel& model) const override;
  [[nodiscard]] std::string name() const override { return "external"; }

 private:
  std::string command_;
};

}  // namespace tship
