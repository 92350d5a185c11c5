#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iegs/model.hpp"
#include "iegs/pwl.hpp"
#include "iegs/stealth.hpp"
#include "iegs/types.hpp"

namespace iegs {

// Provenance of every lower-level row; each physical constraint group lands
// in exactly one tag.
enum class RowTag {
  UcOutput,          // (4d) with commitment coupling
  LineLimit,         // (4e)
  PowerBalance,      // (4f)
  PowerShed,         // (4g)
  WellCapacity,      // (4h)
  PressureBound,     // (4i)
  WeymouthPwl,       // PWL rows replacing (4j)
  CompressorRatio,   // (4k)
  PipelineLimit,     // (4l)
  ActiveLimit,       // (4m)
  GasBalance,        // (4n)
  GasShed,           // (4o)
  P2GCoupling,       // power draw bounds of P2G facilities
};

const char* row_tag_name(RowTag tag);

// Compact bilevel form: max c'y0 s.t. Ax <= a, (y0,z0) in argmin{c'y : Dx +
// Ey + Fz <= d}. Lower-level rows are all <= with equalities stored as
// paired inequalities so every dual vector is nonnegative.
struct CompactBilevel {
  struct LowerRow {
    std::string name;
    RowTag tag = RowTag::UcOutput;
    std::vector<std::pair<int, double>> on_x; // core attack columns only
    std::vector<std::pair<int, double>> on_y;
    std::vector<std::pair<int, double>> on_z;
    double rhs = 0.0;
  };

  // Upper level. `upper` may carry auxiliary columns and binaries from the
  // model extensions; `base_rows` is always the plain stealth polytope over
  // the core columns, which is what SP2 and the oracle enumerate.
  LinearBlock upper;
  std::vector<milp::Row> base_rows;
  std::size_t core_dim = 0;
  std::size_t core_power_dim = 0;   // leading power-load columns within core
  std::vector<std::string> x_names; // core columns

  std::vector<std::string> y_names;
  std::vector<double> y_cost; // c
  std::vector<std::string> z_names;
  std::vector<LowerRow> lower;

  // Physical ranges used only for big-M propagation; the rows themselves
  // carry the binding constraints.
  std::vector<double> y_lo, y_hi;
  std::vector<double> x_lo, x_hi; // core columns

  std::map<std::string, int> x_index, y_index, z_index;

  std::size_t dim_n() const { return core_dim; }
  std::size_t dim_q() const { return y_names.size(); }
  std::size_t dim_r() const { return z_names.size(); }
  std::size_t dim_p() const { return lower.size(); }
  std::size_t dim_m() const { return base_rows.size(); }

  /// d - D x for a fixed core attack vector.
  std::vector<double> rhs_minus_dx(const std::vector<double>& x_core) const;
};

struct AssembleOptions {
  // Reserved for future knobs; assembly is fully determined by the instance
  // and the attack block today.
};

/// Assembles O-M from a validated instance and an upper-level block from the
/// stealth module. PWL schemes for every passive pipeline are built from the
/// instance's segment count.
CompactBilevel assemble_compact(const IEGSInstance& instance, const LinearBlock& attack,
                                const AssembleOptions& options = {});

/// Lower-level problem at a fixed core attack vector: a MILP over (y, z)
/// when `z_fixed` is null, else the LP with z pinned.
milp::Model lower_level_model(const CompactBilevel& compact, const std::vector<double>& x_core,
                              const std::vector<double>* z_fixed);

/// Model-size comparison of the SP2 reformulation against a direct KKT
/// single-level, in the (variables, constraints) convention of the paper's
/// diagnostic table.
struct Sp2SizeComparison {
  std::size_t model16_vars = 0, model16_cons = 0;
  std::size_t kktm_vars = 0, kktm_cons = 0;
  long var_difference = 0;  // kktm - model16 = p + q - m
  long cons_difference = 0; // kktm - model16 = 4p - 2m - n
};
Sp2SizeComparison sp2_size_comparison(const CompactBilevel& compact);

} // namespace iegs
