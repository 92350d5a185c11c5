#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iegs/compact.hpp"
#include "iegs/stealth.hpp"
#include "iegs/types.hpp"

namespace iegs::oracle {

// Operator dispatch in the falsified world, built directly from the physical
// equations (independent of the compact assembly) for cross-validation. The
// PWL Weymouth relation is handled by enumerating the K segment choices per
// pipeline, which is exactly the incremental block's feasible set.
struct DispatchResult {
  bool feasible = false;
  double cost = 0.0;
  std::vector<double> p_gen;
  std::vector<double> shed_power;
  std::vector<double> g_well;
  std::vector<double> g_pipeline;
  std::vector<double> g_compressor;
  std::vector<double> pi_node;
  std::vector<double> shed_gas;
  std::vector<double> p2g_draw;
  std::vector<int> commitment;     // per generator
  std::vector<int> pipe_segment;   // chosen PWL segment per pipeline
  std::vector<double> line_flow;
};

/// Falsified-world optimum. `uc_fixed` pins the commitment (sigma stays
/// free); null means the operator chooses it.
DispatchResult evaluate_dispatch(const IEGSInstance& instance, const AttackVector& x,
                                 const std::vector<int>* uc_fixed = nullptr);

/// Same dispatch but with the full compact z (commitment + sigma bits) pinned.
DispatchResult evaluate_dispatch_at_z(const IEGSInstance& instance, const AttackVector& x,
                                      const std::vector<double>& z_bits,
                                      const CompactBilevel& compact);

struct RealizedResult {
  double falsified_cost = 0.0; // what the operator believes it pays
  double realized_cost = 0.0;  // redispatch against the true loads, u fixed
  bool realized_feasible = false;
  std::vector<int> commitment;
  DispatchResult falsified;
  DispatchResult realized;
};

/// Policy "fix-commitment-redispatch": commit on falsified loads, then
/// re-optimize the continuous dispatch against the true loads.
RealizedResult evaluate_realized_cost(const IEGSInstance& instance, const AttackVector& x);

/// All vertices of the stealth polytope (per-carrier balanced boxes).
std::vector<AttackVector> region_vertices(const IEGSInstance& instance);

struct SearchSpec {
  int grid_points = 421; // odd so 0 stays on-grid
  std::size_t max_r = 12;
  std::size_t max_free_dims = 6;
  bool parallel = true;
};

struct TracePoint {
  AttackVector x;
  double value = 0.0;
};

struct BruteForceResult {
  double value = 0.0;
  AttackVector best;
  std::vector<TracePoint> trace;
  std::size_t points_searched = 0;
};

/// Certified lower bound on the optimistic bilevel optimum: max over all
/// region vertices plus a uniform grid of the falsified-world dispatch
/// optimum. Exact whenever the true optimum sits on a searched point.
BruteForceResult brute_force_bilevel(const IEGSInstance& instance, const CompactBilevel& compact,
                                     const SearchSpec& spec = {});

struct ZClassification {
  std::vector<std::vector<double>> z_bits; // all 2^r in counting order
  std::vector<bool> mu_feasible;
  std::vector<double> gamma_f;             // vertex-enumerated max-min slack
  std::vector<std::optional<AttackVector>> witness; // for nu members
  std::size_t mu_count = 0;
  std::size_t nu_count = 0;
};

/// Definition-level membership test: z is mu-feasible iff the feasibility LP
/// min 1's over (15c) is zero at the worst region vertex.
ZClassification classify_z(const IEGSInstance& instance, const CompactBilevel& compact,
                           const SearchSpec& spec = {});

/// Feasibility value min 1^T s of (15c) at a fixed (x, z).
double feasibility_slack(const CompactBilevel& compact, const AttackVector& x,
                         const std::vector<double>& z_bits);

} // namespace iegs::oracle
