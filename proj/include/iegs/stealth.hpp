#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iegs/model.hpp"
#include "iegs/types.hpp"

namespace iegs {

// Upper-level decision x = (power-load deltas, gas-load deltas), ordered like
// the instance load vectors.
struct AttackVector {
  std::vector<double> dp; // MW per power load
  std::vector<double> dg; // Sm3/h per gas load

  static AttackVector zeros(const IEGSInstance& inst) {
    return {std::vector<double>(inst.power.loads.size(), 0.0),
            std::vector<double>(inst.gas.loads.size(), 0.0)};
  }
};

struct FalsifiedMeasurements {
  std::vector<double> dp_line;     // per power line
  std::vector<double> dg_pipeline; // per passive pipeline
  std::vector<double> dg_compressor;
  std::vector<double> dpi_node;    // squared-pressure deltas per gas node
};

// A constraint block over local columns. The first `core_dim` columns are the
// attack variables (power-load deltas then gas-load deltas); anything after
// them is auxiliary (measurement deltas, PWL fill variables, indicator
// binaries).
struct LinearBlock {
  std::vector<milp::Var> vars;
  std::vector<milp::Row> rows;
  std::size_t core_dim = 0;

  std::size_t num_binaries() const;
  /// Membership test: fixes the core columns to x and checks whether some
  /// assignment of the auxiliary columns satisfies every row.
  bool contains(const AttackVector& x, double tol = 1e-7) const;
};

/// The stealthy-attack polytope (7b): load balance per carrier as inequality
/// pairs plus the +-tau boxes, all emitted as rows.
LinearBlock attack_region(const IEGSInstance& instance);

/// Power-flow measurement deltas induced by x; exact and linear in x.
std::vector<double> derive_power_flow_deltas(const AttackVector& x, const PtdfMatrix& ptdf,
                                             const PowerSystem& power);

struct GasDeltas {
  std::vector<double> dg_pipeline;
  std::vector<double> dg_compressor;
  std::vector<double> dpi_node;
  int newton_iterations = 0;
  double residual = 0.0;
};

/// Gas measurement deltas consistent with nodal balance and the incremental
/// Weymouth relation. Trees are solved by leaf-to-root accumulation and exact
/// pressure propagation; meshed networks run a damped Gauss-Newton on the
/// loop residuals from the minimum-norm flow correction. The reference node
/// of every passive-connected component carries dpi = 0.
GasDeltas derive_gas_deltas(const AttackVector& x, const IEGSInstance& instance);

FalsifiedMeasurements derive_falsified(const AttackVector& x, const PtdfMatrix& ptdf,
                                       const IEGSInstance& instance);

// Estimated measurements (a no-attack dispatch) feeding the
// violation-avoidance extension.
struct DispatchEstimates {
  std::vector<double> p_gen;
  std::vector<double> shed_power;
  std::vector<double> g_pipeline;
  std::vector<double> g_compressor;
  std::vector<double> pi_node;
};

/// Violation-avoidance block (8a)-(8e) plus the measurement-consistency rows
/// (3d) and PWL-linearized (3e) over upper-level auxiliaries.
LinearBlock extension_violation_block(const IEGSInstance& instance,
                                      const DispatchEstimates& estimates);

/// Attack-budget block (9a)-(9g): indicator binaries per measurement with the
/// forward big-M direction only, and the cardinality row with the line
/// coefficient 2 exactly as written.
LinearBlock budget_block(const IEGSInstance& instance, double budget);

/// Appends `extra`'s rows and auxiliary columns onto `base` (shared core).
LinearBlock merge_blocks(const LinearBlock& base, const LinearBlock& extra);

/// Region selector used by the CLI: plain attack region, or the extension
/// blocks when toggled.
LinearBlock build_upper_region(const IEGSInstance& instance,
                               const std::optional<DispatchEstimates>& estimates,
                               const std::optional<double>& budget);

} // namespace iegs
