#pragma once

#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace iegs::milp {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Continuous, Binary };
enum class Sense { LE, GE, EQ };
enum class ObjSense { Min, Max };

struct Var {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lo = -kInf;
  double hi = kInf;
};

struct Row {
  std::string name;
  Sense sense = Sense::LE;
  double rhs = 0.0;
  std::vector<std::pair<int, double>> coeffs; // (column, value)
};

class Model {
 public:
  ObjSense obj_sense = ObjSense::Min;
  std::vector<Var> vars;
  std::vector<Row> rows;
  std::vector<double> obj; // parallel to vars
  double obj_offset = 0.0;

  int add_var(const std::string& name, VarKind kind, double lo, double hi,
              double obj_coeff = 0.0);
  int add_continuous(const std::string& name, double lo, double hi, double obj_coeff = 0.0) {
    return add_var(name, VarKind::Continuous, lo, hi, obj_coeff);
  }
  int add_binary(const std::string& name, double obj_coeff = 0.0) {
    return add_var(name, VarKind::Binary, 0.0, 1.0, obj_coeff);
  }
  int add_row(const std::string& name, Sense sense, double rhs,
              std::vector<std::pair<int, double>> coeffs);

  int var_index(const std::string& name) const; // -1 when absent
  std::size_t num_vars() const { return vars.size(); }
  std::size_t num_rows() const { return rows.size(); }
  std::size_t num_binaries() const;

  /// Throws DimensionError on out-of-range coefficients or binaries with
  /// bounds outside [0,1].
  void check_well_formed() const;

  double row_activity(const Row& row, const std::vector<double>& x) const;
  bool is_feasible_point(const std::vector<double>& x, double tol = 1e-7) const;
  double objective_value(const std::vector<double>& x) const;

  /// Sparse text export: `r <row> <col> <value>` per nonzero with 12
  /// significant digits, preceded by variable/row declarations.
  void export_sparse(std::ostream& os) const;

 private:
  std::map<std::string, int> index_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct Solution {
  SolveStatus status = SolveStatus::IterationLimit;
  double objective = 0.0;
  std::vector<double> x;
  // LP-only extras (empty for MILPs): duals follow the Lagrangian convention
  // of the solved sense, i.e. for a minimization `duals[i]` is d obj / d rhs_i.
  std::vector<double> duals;
  std::vector<double> reduced_costs;
  long lp_iterations = 0;
  long nodes = 0;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

} // namespace iegs::milp
