#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iegs/model.hpp"

namespace iegs::milp {

struct SolveParams {
  double gap = 1e-8;            // absolute incumbent-vs-bound gap for MILPs
  long lp_iteration_cap = 2'000'000;
  long node_cap = 400'000;
  std::optional<std::vector<double>> mip_start; // validated warm incumbent
  std::string backend = "bundled";
};

/// Solver backend contract. Backends must state whether distinct Model
/// instances may be solved concurrently through the same backend object.
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual std::string name() const = 0;
  virtual bool supports_concurrent_solves() const = 0;
  virtual Solution solve(const Model& model, const SolveParams& params) = 0;
};

/// Bundled exact desk-scale backend: bounded-variable primal simplex with a
/// Bland's-rule anti-cycling fallback, best-first branch-and-bound on the
/// binaries (most-fractional branching, ties by lowest column index).
std::shared_ptr<SolverBackend> bundled_backend();

/// Named backend lookup; only "bundled" ships, but external backends can be
/// registered by embedders.
std::shared_ptr<SolverBackend> backend_by_name(const std::string& name);
void register_backend(const std::shared_ptr<SolverBackend>& backend);

Solution solve(const Model& model, const SolveParams& params = {});

/// LP dual of `lp` (binaries rejected). The dual optimum equals the primal
/// optimum whenever the primal is feasible and bounded.
Model dualize(const Model& lp);

/// One complementarity pair dual_expr * slack_expr = 0 linearized with an
/// indicator binary b: dual <= M_dual * b, slack <= M_slack * (1-b). Both
/// sides are nonnegative affine expressions.
struct ComplementarityPair {
  std::vector<std::pair<int, double>> dual; // dual-side expression
  double dual_constant = 0.0;
  std::vector<std::pair<int, double>> slack; // slack-side expression
  double slack_constant = 0.0;
  double big_m_dual = 1e2;
  double big_m_slack = 1e2;
  std::string label;
};

/// Appends big-M rows + binaries to `model`; returns the binary column per
/// pair (order preserved).
std::vector<int> linearize_complementarity(Model& model,
                                           const std::vector<ComplementarityPair>& pairs);

/// Big-M audit per the milp-kit contract: true when some dual variable or
/// slack expression sits within tol of its M bound at `x`.
bool big_m_audit_flagged(const Model& model, const std::vector<ComplementarityPair>& pairs,
                         const std::vector<double>& x, double tol = 1e-6);

} // namespace iegs::milp
