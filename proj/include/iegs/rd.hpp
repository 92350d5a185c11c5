#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iegs/compact.hpp"
#include "iegs/model.hpp"
#include "iegs/oracle.hpp"
#include "iegs/solve.hpp"

namespace iegs::rd {

struct RDParams {
  double rho = 3e1;              // penalty, broadcast over rows
  std::vector<double> rho_rows;  // optional per-row override
  double big_m = 1e2;            // floor for propagated big-M values
  double epsilon = 1e-4;         // UB-LB convergence threshold
  int iteration_cap = 64;
  int max_penalty_escalations = 6;
  std::string backend = "bundled";
  milp::SolveParams solver;      // gap/caps forwarded to every solve

  double rho_for_row(std::size_t i) const {
    return rho_rows.empty() ? rho : rho_rows[i];
  }
};

enum class RDStatus { Converged, IterationLimit, MasterInfeasible, Stalled };

struct IterationRecord {
  int k = 0;
  double upper_bound = 0.0;
  double lower_bound = 0.0;
  std::string z_bits;       // SP1's commitment, empty on the terminal check
  double gamma_f = 0.0;     // SP2 value for that z
  std::string classification; // "mu" | "nu" | ""
  double wall_seconds = 0.0;
};

struct RDState {
  int k = 0;
  std::vector<std::vector<double>> mu_pool;
  std::vector<std::vector<double>> nu_pool;
  double lower_bound = -milp::kInf;
  double upper_bound = milp::kInf;
  std::vector<IterationRecord> log;
};

struct Diagnostics {
  int rho_escalations = 0;
  double rho_final = 0.0;
  bool big_m_doubled = false;
  bool marked_unsound = false;
  std::vector<std::string> notes;
};

struct SolveReport {
  RDStatus status = RDStatus::Converged;
  double objective = 0.0;
  AttackVector attack;
  std::vector<double> operator_y;   // compact y order
  std::vector<double> commitment_z; // compact z order
  RDState state;
  std::size_t mu_found = 0, nu_found = 0;
  Diagnostics diagnostics;
  double wall_seconds = 0.0;
};

/// Master problem assembled from the current cut pools; `layout` exposes the
/// copy structure for audits and warm starts.
struct MasterLayout {
  milp::Model model;
  int x_offset = 0; // upper block columns start here (core first)
  int y0_offset = 0;
  int z0_offset = 0;
  struct Copy {
    std::vector<double> z_bits;
    bool penalized = false;
    int y_offset = 0;
    int dual_offset = 0;
    int slack_offset = -1; // penalized copies only
    int cut_row = -1;
    std::vector<milp::ComplementarityPair> pairs;
  };
  std::vector<Copy> copies;
};

MasterLayout build_master(const CompactBilevel& compact,
                          const std::vector<std::vector<double>>& mu_pool,
                          const std::vector<std::vector<double>>& nu_pool,
                          const RDParams& params);

struct Sp1Result {
  double value = 0.0;
  std::vector<double> z_bits;
  std::vector<double> y;
  bool feasible = false;
};
/// Lower-level MILP at a fixed attack; the exact operator response.
Sp1Result solve_sp1(const CompactBilevel& compact, const AttackVector& x,
                    const RDParams& params = {});

struct Sp2Result {
  double gamma_f = 0.0;
  bool feasible_for_all_x = false; // gamma_f == 0 within tolerance
  AttackVector worst_x;
  bool big_m_doubled = false;
  bool unsound = false;
};
/// Feasibility classifier via the duality+KKT reformulation; returns the
/// max-min slack over the base stealth polytope.
Sp2Result solve_sp2(const CompactBilevel& compact, const std::vector<double>& z_bits,
                    const RDParams& params = {});

/// Modified R&D (Algorithm 1).
SolveReport solve_om(const CompactBilevel& compact, const RDParams& params = {});

/// Monolithic single-level reformulation over a full Z classification;
/// refuses r beyond the cap (default 12).
double solve_kkt_r(const CompactBilevel& compact, const oracle::ZClassification& classes,
                   const RDParams& params = {}, std::size_t r_cap = 12,
                   Diagnostics* diagnostics = nullptr);

/// Non-UC baseline: commitments pinned to 1 and the PWL fills pinned to the
/// no-attack pattern, making the lower level a pure LP; solved as the KKT
/// single-level MILP.
struct Model4Result {
  double objective = 0.0;
  AttackVector attack;
  std::vector<double> y;
};
Model4Result solve_model4(const IEGSInstance& instance, const CompactBilevel& compact,
                          const RDParams& params = {});

/// R&D without the SP2 feasibility check: every commitment lands in the
/// mu-pool. May terminate on an infeasible master, which is reported as the
/// expected failure mode, and may return a suboptimal attack.
SolveReport solve_urd(const CompactBilevel& compact, const RDParams& params = {});

// Classification threshold shared with the oracle agreement checks.
inline constexpr double kGammaTol = 1e-6;

} // namespace iegs::rd
