#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "iegs/model.hpp"

namespace iegs::milp {

// Bounded-variable revised primal simplex over the rows of a Model. Rows are
// handled uniformly through logical columns (<=: slack in [0,inf), >=: slack
// in (-inf,0], =: slack fixed at 0). Phase 1 runs the composite
// least-infeasibility objective so the solver can start from any basis, which
// is what lets branch-and-bound warm-start children from parent bases.
// Dantzig pricing with a Bland's-rule fallback after a degenerate stall.
class Simplex {
 public:
  struct Basis {
    std::vector<int> basic;           // column basic in each row position
    std::vector<std::uint8_t> where;  // VarState per column
  };

  struct Result {
    SolveStatus status = SolveStatus::IterationLimit;
    double objective = 0.0;            // structural objective, Min sense
    std::vector<double> x;             // structural values
    std::vector<double> duals;         // per row, d obj / d rhs
    std::vector<double> reduced_costs; // per structural column
    long iterations = 0;
    Basis basis;
  };

  /// The model must already be in Min sense; binaries are treated as plain
  /// bounded continuous columns here (branch-and-bound fixes them).
  explicit Simplex(const Model& model);
  ~Simplex();
  Simplex(const Simplex&) = delete;
  Simplex& operator=(const Simplex&) = delete;

  /// lo/hi overrides (sized num_vars) replace structural bounds when given.
  Result solve(const std::vector<double>* lo_override,
               const std::vector<double>* hi_override, const Basis* warm_start,
               long iteration_cap);

  std::size_t num_rows() const { return m_; }
  std::size_t num_structural() const { return nstruct_; }

 private:
  struct Eta {
    int pivot_row = -1;
    std::vector<std::pair<int, double>> column; // sparse B^-1 a_q
    double pivot_value = 0.0;
  };

  enum VarState : std::uint8_t { AtLower = 0, AtUpper = 1, FreeZero = 2, InBasis = 3 };

  std::size_t m_ = 0;       // rows
  std::size_t nstruct_ = 0; // structural columns
  std::size_t ncols_ = 0;   // structural + logicals
  std::vector<std::vector<std::pair<int, double>>> cols_;
  std::vector<double> rhs_;
  std::vector<double> cost_;
  std::vector<double> lo_, hi_; // working bounds
  std::vector<double> base_lo_, base_hi_;

  std::vector<int> basic_;
  std::vector<int> row_of_; // row position of basic column, -1 otherwise
  std::vector<std::uint8_t> where_;
  std::vector<double> xval_;

  struct LuState;
  std::unique_ptr<LuState> lu_;
  std::vector<Eta> etas_;
  int refactor_limit_ = 64;

  double ctol_ = 1e-9; // dual tolerance, scaled at solve start
  static constexpr double kPivTol = 1e-9;
  static constexpr double kFeasTol = 1e-7;

  void install_bounds(const std::vector<double>* lo_override,
                      const std::vector<double>* hi_override);
  void default_basis();
  bool adopt_basis(const Basis& warm);
  bool refactorize();
  void recompute_basics();
  void ftran(std::vector<double>& v) const;
  void btran(std::vector<double>& v) const;
  void add_column(int col, double scale, std::vector<double>& dense) const;
  double feas_tol(int col) const;
};

} // namespace iegs::milp
