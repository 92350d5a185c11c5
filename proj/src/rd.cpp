#include "iegs/rd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "iegs/errors.hpp"

namespace iegs::rd {

using milp::kInf;
using milp::Model;
using milp::Sense;
using milp::SolveStatus;

namespace {

constexpr double kBigMCap = 1e6;

std::vector<double> core_of(const CompactBilevel& cb, const AttackVector& x) {
  std::vector<double> core(x.dp);
  core.insert(core.end(), x.dg.begin(), x.dg.end());
  if (core.size() != cb.core_dim) throw DimensionError("attack vector dimension mismatch");
  return core;
}

AttackVector attack_of(const CompactBilevel& cb, const std::vector<double>& core) {
  AttackVector x;
  x.dp.assign(core.begin(), core.begin() + static_cast<long>(cb.core_power_dim));
  x.dg.assign(core.begin() + static_cast<long>(cb.core_power_dim), core.end());
  return x;
}

std::string bits_of(const std::vector<double>& z) {
  std::string s;
  for (double v : z) s += v > 0.5 ? '1' : '0';
  return s;
}

// Interval extremes of an expression over the compact's physical ranges.
// `on_x` indexes core columns, `on_y` the copy's y block.
double expr_min(const CompactBilevel& cb, const std::vector<std::pair<int, double>>& on_x,
                const std::vector<std::pair<int, double>>& on_y) {
  double v = 0.0;
  for (const auto& [c, a] : on_x)
    v += a > 0 ? a * cb.x_lo[static_cast<std::size_t>(c)]
               : a * cb.x_hi[static_cast<std::size_t>(c)];
  for (const auto& [c, a] : on_y)
    v += a > 0 ? a * cb.y_lo[static_cast<std::size_t>(c)]
               : a * cb.y_hi[static_cast<std::size_t>(c)];
  return v;
}

double expr_max(const CompactBilevel& cb, const std::vector<std::pair<int, double>>& on_x,
                const std::vector<std::pair<int, double>>& on_y) {
  double v = 0.0;
  for (const auto& [c, a] : on_x)
    v += a > 0 ? a * cb.x_hi[static_cast<std::size_t>(c)]
               : a * cb.x_lo[static_cast<std::size_t>(c)];
  for (const auto& [c, a] : on_y)
    v += a > 0 ? a * cb.y_hi[static_cast<std::size_t>(c)]
               : a * cb.y_lo[static_cast<std::size_t>(c)];
  return v;
}

double fz_term(const CompactBilevel::LowerRow& row, const std::vector<double>& z) {
  double v = 0.0;
  for (const auto& [c, a] : row.on_z) v += a * z[static_cast<std::size_t>(c)];
  return v;
}

double clamp_m(double v, double floor_m) {
  return std::min(std::max(v, floor_m), kBigMCap);
}

// Dual-side big-M: optimal duals of the dispatch LPs are combinations of the
// cost entries, so the l1 norm of c is a practical ceiling; the audit doubles
// it once if a dual still touches the bound.
double dual_big_m(const CompactBilevel& cb, const RDParams& params) {
  double csum = 0.0;
  for (double c : cb.y_cost) csum += std::abs(c);
  return clamp_m(std::max({params.big_m, params.rho * 1.01, csum}), params.big_m);
}

// Appends one KKT copy of the lower level at a fixed z. Returns the layout
// entry; `penalized` adds the slack block and the (rho - v) _|_ s pairs.
MasterLayout::Copy append_copy(Model& m, const CompactBilevel& cb,
                               const std::vector<double>& z, bool penalized, int copy_id,
                               int x_offset, const RDParams& params) {
  MasterLayout::Copy copy;
  copy.z_bits = z;
  copy.penalized = penalized;
  const auto p = cb.dim_p();
  const auto q = cb.dim_q();
  const std::string tag = (penalized ? "nu" : "mu") + std::to_string(copy_id);
  const double m_dual = dual_big_m(cb, params);

  copy.y_offset = static_cast<int>(m.num_vars());
  for (std::size_t j = 0; j < q; ++j)
    m.add_continuous("y." + tag + "[" + cb.y_names[j] + "]", cb.y_lo[j], cb.y_hi[j]);
  copy.dual_offset = static_cast<int>(m.num_vars());
  for (std::size_t i = 0; i < p; ++i)
    m.add_continuous("mu." + tag + "#" + std::to_string(i), 0.0,
                     penalized ? params.rho_for_row(i) : m_dual);
  if (penalized) {
    copy.slack_offset = static_cast<int>(m.num_vars());
    for (std::size_t i = 0; i < p; ++i) {
      const auto& row = cb.lower[i];
      const double viol =
          std::max(0.0, expr_max(cb, row.on_x, row.on_y) + fz_term(row, z) - row.rhs);
      m.add_continuous("s." + tag + "#" + std::to_string(i), 0.0, viol + 1.0);
    }
  }

  // Feasibility rows D x + E y (- s) <= d - F z.
  for (std::size_t i = 0; i < p; ++i) {
    const auto& row = cb.lower[i];
    std::vector<std::pair<int, double>> coeffs;
    for (const auto& [c, a] : row.on_x) coeffs.push_back({x_offset + c, a});
    for (const auto& [c, a] : row.on_y) coeffs.push_back({copy.y_offset + c, a});
    if (penalized) coeffs.push_back({copy.slack_offset + static_cast<int>(i), -1.0});
    m.add_row("feas." + tag + "[" + row.name + "]", Sense::LE, row.rhs - fz_term(row, z),
              std::move(coeffs));
  }
  // Stationarity E^T mu + c = 0.
  for (std::size_t j = 0; j < q; ++j) {
    std::vector<std::pair<int, double>> coeffs;
    for (std::size_t i = 0; i < p; ++i)
      for (const auto& [c, a] : cb.lower[i].on_y)
        if (static_cast<std::size_t>(c) == j)
          coeffs.push_back({copy.dual_offset + static_cast<int>(i), a});
    m.add_row("stat." + tag + "[" + cb.y_names[j] + "]", Sense::EQ, -cb.y_cost[j],
              std::move(coeffs));
  }
  // Complementarity pairs.
  for (std::size_t i = 0; i < p; ++i) {
    const auto& row = cb.lower[i];
    milp::ComplementarityPair pr;
    pr.label = tag + ".feas#" + std::to_string(i);
    pr.dual = {{copy.dual_offset + static_cast<int>(i), 1.0}};
    pr.dual_constant = 0.0;
    pr.big_m_dual = penalized ? params.rho_for_row(i) : m_dual;
    pr.slack_constant = row.rhs - fz_term(row, z);
    for (const auto& [c, a] : row.on_x) pr.slack.push_back({x_offset + c, -a});
    for (const auto& [c, a] : row.on_y) pr.slack.push_back({copy.y_offset + c, -a});
    double smax = pr.slack_constant - expr_min(cb, row.on_x, row.on_y);
    if (penalized) {
      pr.slack.push_back({copy.slack_offset + static_cast<int>(i), 1.0});
      smax += std::max(0.0, expr_max(cb, row.on_x, row.on_y) + fz_term(row, z) - row.rhs) + 1.0;
    }
    pr.big_m_slack = clamp_m(smax, params.big_m);
    copy.pairs.push_back(std::move(pr));
  }
  if (penalized) {
    for (std::size_t i = 0; i < p; ++i) {
      const auto& row = cb.lower[i];
      milp::ComplementarityPair pr;
      pr.label = tag + ".pen#" + std::to_string(i);
      pr.dual = {{copy.dual_offset + static_cast<int>(i), -1.0}};
      pr.dual_constant = params.rho_for_row(i); // rho - v
      pr.big_m_dual = params.rho_for_row(i);
      pr.slack = {{copy.slack_offset + static_cast<int>(i), 1.0}};
      pr.slack_constant = 0.0;
      const double viol =
          std::max(0.0, expr_max(cb, row.on_x, row.on_y) + fz_term(row, z) - row.rhs);
      pr.big_m_slack = clamp_m(viol + 1.0, params.big_m);
      copy.pairs.push_back(std::move(pr));
    }
  }
  milp::linearize_complementarity(m, copy.pairs);
  return copy;
}

// Vertices of the base stealth polytope (balanced symmetric boxes per
// carrier), straight from the compact's core ranges.
std::vector<std::vector<double>> base_region_vertices(const CompactBilevel& cb) {
  auto side = [](const std::vector<double>& widths) {
    std::vector<std::vector<double>> verts;
    const std::size_t n = widths.size();
    if (n == 0) return std::vector<std::vector<double>>{{}};
    if (n == 1) return std::vector<std::vector<double>>{{0.0}};
    std::set<std::vector<long long>> seen;
    for (std::size_t free = 0; free < n; ++free) {
      for (std::size_t mask = 0; mask < (std::size_t{1} << (n - 1)); ++mask) {
        std::vector<double> v(n, 0.0);
        double sum = 0.0;
        std::size_t bit = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == free) continue;
          v[i] = (((mask >> bit) & 1) ? 1.0 : -1.0) * widths[i];
          sum += v[i];
          ++bit;
        }
        v[free] = -sum;
        if (std::abs(v[free]) > widths[free] + 1e-12) continue;
        std::vector<long long> key;
        for (double val : v) key.push_back(llround(val * 1e9));
        if (seen.insert(key).second) verts.push_back(std::move(v));
      }
    }
    return verts;
  };
  std::vector<double> wp, wg;
  for (std::size_t j = 0; j < cb.core_power_dim; ++j) wp.push_back(cb.x_hi[j]);
  for (std::size_t j = cb.core_power_dim; j < cb.core_dim; ++j) wg.push_back(cb.x_hi[j]);
  std::vector<std::vector<double>> out;
  for (const auto& a : side(wp))
    for (const auto& b : side(wg)) {
      std::vector<double> v(a);
      v.insert(v.end(), b.begin(), b.end());
      out.push_back(std::move(v));
    }
  return out;
}

// Valid cap on a copy's objective: the KKT set pins c'y_i (+ rho's_i) to the
// (relaxed) lower-level optimum at x, a convex function of x, so its maximum
// over the polytope sits at a vertex. Capping the copy at that value is a
// pure bound-strengthening row that collapses the master's LP relaxation.
double copy_value_cap(const CompactBilevel& cb, const std::vector<double>& z, bool penalized,
                      const RDParams& params,
                      const std::vector<std::vector<double>>& vertices) {
  double cap = -kInf;
  for (const auto& v : vertices) {
    Model lp;
    for (std::size_t j = 0; j < cb.dim_q(); ++j)
      lp.add_continuous(cb.y_names[j], -kInf, kInf, cb.y_cost[j]);
    std::vector<int> svars;
    if (penalized)
      for (std::size_t i = 0; i < cb.dim_p(); ++i)
        svars.push_back(
            lp.add_continuous("s#" + std::to_string(i), 0.0, kInf, params.rho_for_row(i)));
    const auto b = cb.rhs_minus_dx(v);
    for (std::size_t i = 0; i < cb.dim_p(); ++i) {
      const auto& row = cb.lower[i];
      std::vector<std::pair<int, double>> coeffs(row.on_y);
      if (penalized) coeffs.push_back({svars[i], -1.0});
      lp.add_row(row.name, Sense::LE, b[i] - fz_term(row, z), std::move(coeffs));
    }
    auto sol = milp::solve(lp);
    if (!sol.optimal()) return kInf; // infeasible/unbounded copy: no cap
    cap = std::max(cap, sol.objective);
  }
  // Headroom stays below the master's MILP gap so the cap never manufactures
  // a phantom branch-and-bound gap.
  return cap == -kInf ? kInf : cap + 1e-6;
}

// Cheap necessary condition on the penalty: at the best region vertex the
// penalized value of every nu-copy must reach the true lower-level optimum,
// otherwise the cut provably undercuts O-M there and rho has to grow before
// any master is worth solving.
bool rho_undercuts_at_vertices(const CompactBilevel& cb,
                               const std::vector<std::vector<double>>& nu_pool,
                               const RDParams& params) {
  if (nu_pool.empty()) return false;
  const auto vertices = base_region_vertices(cb);
  double best_gamma = -kInf;
  std::vector<double> best_vertex;
  for (const auto& v : vertices) {
    auto sp1 = solve_sp1(cb, attack_of(cb, v), params);
    if (sp1.value > best_gamma) {
      best_gamma = sp1.value;
      best_vertex = v;
    }
  }
  if (best_vertex.empty()) return false;
  for (const auto& z : nu_pool) {
    const double relaxed = copy_value_cap(cb, z, true, params, {best_vertex}) - 1e-6;
    if (relaxed < best_gamma - params.epsilon) return true;
  }
  return false;
}

} // namespace

MasterLayout build_master(const CompactBilevel& cb,
                          const std::vector<std::vector<double>>& mu_pool,
                          const std::vector<std::vector<double>>& nu_pool,
                          const RDParams& params) {
  MasterLayout ml;
  Model& m = ml.model;
  m.obj_sense = milp::ObjSense::Max;

  // Upper-level block (13b): the attack columns plus any extension
  // auxiliaries, with the block rows verbatim.
  ml.x_offset = 0;
  for (std::size_t j = 0; j < cb.upper.vars.size(); ++j) {
    auto v = cb.upper.vars[j];
    if (j < cb.core_dim) {
      v.lo = cb.x_lo[j];
      v.hi = cb.x_hi[j];
    }
    m.add_var("x[" + v.name + "]", v.kind, v.lo, v.hi);
  }
  for (const auto& row : cb.upper.rows) m.add_row("13b[" + row.name + "]", row.sense, row.rhs,
                                                  row.coeffs);

  // y0 / z0 and the copied feasibility block (13c).
  const auto q = cb.dim_q();
  const auto r = cb.dim_r();
  ml.y0_offset = static_cast<int>(m.num_vars());
  for (std::size_t j = 0; j < q; ++j)
    m.add_continuous("y0[" + cb.y_names[j] + "]", cb.y_lo[j], cb.y_hi[j], cb.y_cost[j]);
  ml.z0_offset = static_cast<int>(m.num_vars());
  for (std::size_t k = 0; k < r; ++k) m.add_binary("z0[" + cb.z_names[k] + "]");
  for (std::size_t i = 0; i < cb.lower.size(); ++i) {
    const auto& row = cb.lower[i];
    std::vector<std::pair<int, double>> coeffs;
    for (const auto& [c, a] : row.on_x) coeffs.push_back({ml.x_offset + c, a});
    for (const auto& [c, a] : row.on_y) coeffs.push_back({ml.y0_offset + c, a});
    for (const auto& [c, a] : row.on_z) coeffs.push_back({ml.z0_offset + c, a});
    m.add_row("13c[" + row.name + "]", Sense::LE, row.rhs, std::move(coeffs));
  }

  // Optimality cuts (13d)-(13e) and penalized cuts (13f)-(13g).
  const auto vertices = base_region_vertices(cb);
  int copy_id = 0;
  auto add_cut = [&](const MasterLayout::Copy& copy) {
    std::vector<std::pair<int, double>> coeffs;
    for (std::size_t j = 0; j < q; ++j)
      if (cb.y_cost[j] != 0.0) {
        coeffs.push_back({ml.y0_offset + static_cast<int>(j), cb.y_cost[j]});
        coeffs.push_back({copy.y_offset + static_cast<int>(j), -cb.y_cost[j]});
      }
    if (copy.penalized)
      for (std::size_t i = 0; i < cb.dim_p(); ++i)
        coeffs.push_back({copy.slack_offset + static_cast<int>(i), -params.rho_for_row(i)});
    return m.add_row((copy.penalized ? "13f#" : "13d#") + std::to_string(copy_id), Sense::LE,
                     0.0, std::move(coeffs));
  };
  auto add_cap = [&](const MasterLayout::Copy& copy) {
    const double cap = copy_value_cap(cb, copy.z_bits, copy.penalized, params, vertices);
    if (cap == kInf) return;
    std::vector<std::pair<int, double>> coeffs;
    for (std::size_t j = 0; j < q; ++j)
      if (cb.y_cost[j] != 0.0)
        coeffs.push_back({copy.y_offset + static_cast<int>(j), cb.y_cost[j]});
    if (copy.penalized)
      for (std::size_t i = 0; i < cb.dim_p(); ++i)
        coeffs.push_back({copy.slack_offset + static_cast<int>(i), params.rho_for_row(i)});
    m.add_row("cap#" + std::to_string(copy_id), Sense::LE, cap, std::move(coeffs));
  };
  for (const auto& z : mu_pool) {
    auto copy = append_copy(m, cb, z, false, copy_id, ml.x_offset, params);
    copy.cut_row = add_cut(copy);
    add_cap(copy);
    ml.copies.push_back(std::move(copy));
    ++copy_id;
  }
  for (const auto& z : nu_pool) {
    auto copy = append_copy(m, cb, z, true, copy_id, ml.x_offset, params);
    copy.cut_row = add_cut(copy);
    add_cap(copy);
    ml.copies.push_back(std::move(copy));
    ++copy_id;
  }
  return ml;
}

Sp1Result solve_sp1(const CompactBilevel& cb, const AttackVector& x, const RDParams& params) {
  auto core = core_of(cb, x);
  auto model = lower_level_model(cb, core, nullptr);
  milp::SolveParams sp = params.solver;
  sp.backend = params.backend;
  auto sol = milp::solve(model, sp);
  Sp1Result out;
  if (sol.status == SolveStatus::Infeasible)
    throw SolveError("SP1 infeasible: the lower level cannot respond to this attack, which "
                     "contradicts the all-off fallback; check the instance data");
  if (!sol.optimal()) throw SolveError("SP1 did not solve to optimality");
  out.feasible = true;
  out.value = sol.objective;
  out.y.assign(sol.x.begin(), sol.x.begin() + static_cast<long>(cb.dim_q()));
  out.z_bits.assign(sol.x.begin() + static_cast<long>(cb.dim_q()), sol.x.end());
  for (auto& b : out.z_bits) b = b > 0.5 ? 1.0 : 0.0;
  return out;
}

Sp2Result solve_sp2(const CompactBilevel& cb, const std::vector<double>& z_bits,
                    const RDParams& params) {
  if (z_bits.size() != cb.dim_r()) throw DimensionError("SP2: z dimension mismatch");
  const auto p = cb.dim_p();
  const auto n = cb.dim_n();
  const auto mrows = cb.dim_m();

  Sp2Result out;
  double m_kappa = std::max(params.big_m, 1e2);
  bool doubled = false;

  for (int round = 0;; ++round) {
    Model m;
    m.obj_sense = milp::ObjSense::Max;
    // x over the base polytope only: the reformulation's KKT step needs a
    // plain polytope in x.
    for (std::size_t j = 0; j < n; ++j)
      m.add_continuous("x[" + cb.x_names[j] + "]", cb.x_lo[j], cb.x_hi[j]);
    std::vector<int> pis, kappas;
    for (std::size_t i = 0; i < p; ++i) {
      const double fz = fz_term(cb.lower[i], z_bits);
      pis.push_back(m.add_continuous("pi#" + std::to_string(i), 0.0, 1.0,
                                     fz - cb.lower[i].rhs));
    }
    for (std::size_t j = 0; j < mrows; ++j)
      kappas.push_back(
          m.add_continuous("kappa#" + std::to_string(j), 0.0, m_kappa, cb.base_rows[j].rhs));

    for (std::size_t j = 0; j < mrows; ++j)
      m.add_row("region[" + cb.base_rows[j].name + "]", cb.base_rows[j].sense,
                cb.base_rows[j].rhs, cb.base_rows[j].coeffs);
    // E^T pi = 0.
    for (std::size_t jy = 0; jy < cb.dim_q(); ++jy) {
      std::vector<std::pair<int, double>> coeffs;
      for (std::size_t i = 0; i < p; ++i)
        for (const auto& [c, a] : cb.lower[i].on_y)
          if (static_cast<std::size_t>(c) == jy) coeffs.push_back({pis[i], a});
      m.add_row("Etpi[" + cb.y_names[jy] + "]", Sense::EQ, 0.0, std::move(coeffs));
    }
    // D^T pi - A^T kappa = 0.
    for (std::size_t jx = 0; jx < n; ++jx) {
      std::vector<std::pair<int, double>> coeffs;
      for (std::size_t i = 0; i < p; ++i)
        for (const auto& [c, a] : cb.lower[i].on_x)
          if (static_cast<std::size_t>(c) == jx) coeffs.push_back({pis[i], a});
      for (std::size_t j = 0; j < mrows; ++j)
        for (const auto& [c, a] : cb.base_rows[j].coeffs)
          if (static_cast<std::size_t>(c) == jx) coeffs.push_back({kappas[j], -a});
      m.add_row("stat-x[" + cb.x_names[jx] + "]", Sense::EQ, 0.0, std::move(coeffs));
    }
    // kappa _|_ (a - A x).
    std::vector<milp::ComplementarityPair> pairs;
    for (std::size_t j = 0; j < mrows; ++j) {
      milp::ComplementarityPair pr;
      pr.label = "sp2#" + std::to_string(j);
      pr.dual = {{kappas[j], 1.0}};
      pr.big_m_dual = m_kappa;
      pr.slack_constant = cb.base_rows[j].rhs;
      double lo = 0.0;
      for (const auto& [c, a] : cb.base_rows[j].coeffs) {
        pr.slack.push_back({static_cast<int>(c), -a});
        lo += a > 0 ? a * cb.x_lo[static_cast<std::size_t>(c)]
                    : a * cb.x_hi[static_cast<std::size_t>(c)];
      }
      pr.big_m_slack = clamp_m(cb.base_rows[j].rhs - lo, params.big_m);
      pairs.push_back(std::move(pr));
    }
    milp::linearize_complementarity(m, pairs);

    milp::SolveParams sp = params.solver;
    sp.backend = params.backend;
    auto sol = milp::solve(m, sp);
    if (!sol.optimal()) throw SolveError("SP2 reformulation did not solve to optimality");

    out.gamma_f = sol.objective;
    out.feasible_for_all_x = sol.objective <= kGammaTol;
    std::vector<double> core(n);
    for (std::size_t j = 0; j < n; ++j) core[j] = sol.x[j];
    out.worst_x = attack_of(cb, core);
    if (!milp::big_m_audit_flagged(m, pairs, sol.x)) break;
    if (doubled) {
      out.unsound = true;
      break;
    }
    doubled = true;
    m_kappa *= 2.0;
  }
  out.big_m_doubled = doubled;
  return out;
}

namespace {

struct LoopResult {
  SolveReport report;
  bool want_rho_escalation = false;
  bool want_bigm_double = false;
  double max_dual_seen = 0.0;
};

// Exact/penalized completion of a master solution at a fixed attack vector,
// used as a warm incumbent. Returns nothing when the completion fails
// (extension auxiliaries present, or rho too small to cover the copy).
std::optional<std::vector<double>> complete_master_start(const CompactBilevel& cb,
                                                         const MasterLayout& ml,
                                                         const std::vector<double>& x_core,
                                                         const Sp1Result& sp1,
                                                         const RDParams& params) {
  if (cb.upper.vars.size() != cb.core_dim) return std::nullopt;
  std::vector<double> v(ml.model.num_vars(), 0.0);
  for (std::size_t j = 0; j < cb.core_dim; ++j) v[static_cast<std::size_t>(ml.x_offset) + j] =
      x_core[j];
  for (std::size_t j = 0; j < cb.dim_q(); ++j)
    v[static_cast<std::size_t>(ml.y0_offset) + j] = sp1.y[j];
  for (std::size_t k = 0; k < cb.dim_r(); ++k)
    v[static_cast<std::size_t>(ml.z0_offset) + k] = sp1.z_bits[k];

  const auto b = cb.rhs_minus_dx(x_core);
  for (const auto& copy : ml.copies) {
    Model lp;
    for (std::size_t j = 0; j < cb.dim_q(); ++j)
      lp.add_continuous(cb.y_names[j], -kInf, kInf, cb.y_cost[j]);
    std::vector<int> svars;
    if (copy.penalized)
      for (std::size_t i = 0; i < cb.dim_p(); ++i)
        svars.push_back(lp.add_continuous("s#" + std::to_string(i), 0.0, kInf,
                                          params.rho_for_row(i)));
    for (std::size_t i = 0; i < cb.dim_p(); ++i) {
      const auto& row = cb.lower[i];
      std::vector<std::pair<int, double>> coeffs(row.on_y);
      if (copy.penalized) coeffs.push_back({svars[i], -1.0});
      lp.add_row(row.name, Sense::LE, b[i] - fz_term(row, copy.z_bits), std::move(coeffs));
    }
    auto sol = milp::solve(lp);
    if (!sol.optimal()) return std::nullopt;
    for (std::size_t j = 0; j < cb.dim_q(); ++j)
      v[static_cast<std::size_t>(copy.y_offset) + j] = sol.x[j];
    for (std::size_t i = 0; i < cb.dim_p(); ++i) {
      const double mu = std::max(0.0, -sol.duals[i]);
      v[static_cast<std::size_t>(copy.dual_offset) + i] = mu;
      if (copy.penalized)
        v[static_cast<std::size_t>(copy.slack_offset) + i] = sol.x[cb.dim_q() + i];
    }
  }
  // Indicator binaries: flag = 1 exactly when the dual side may be active.
  for (const auto& copy : ml.copies) {
    for (const auto& pr : copy.pairs) {
      // locate the binary by its label
      const int bcol = ml.model.var_index("flag[" + pr.label + "]");
      if (bcol < 0) return std::nullopt;
      double dual = pr.dual_constant;
      for (const auto& [c, a] : pr.dual) dual += a * v[static_cast<std::size_t>(c)];
      double slack = pr.slack_constant;
      for (const auto& [c, a] : pr.slack) slack += a * v[static_cast<std::size_t>(c)];
      if (dual > 1e-7 && slack > 1e-7) return std::nullopt; // not complementary
      v[static_cast<std::size_t>(bcol)] = dual > 1e-7 ? 1.0 : 0.0;
    }
  }
  if (!ml.model.is_feasible_point(v, 1e-6)) return std::nullopt;
  return v;
}

LoopResult run_rd_loop(const CompactBilevel& cb, const RDParams& params, bool use_sp2,
                       bool urd_mode) {
  LoopResult out;
  SolveReport& rep = out.report;
  RDState& st = rep.state;
  const auto t_start = std::chrono::steady_clock::now();

  double lb = -kInf, ub = kInf;
  std::vector<double> x_best;
  Sp1Result best_sp1;
  std::set<std::vector<long long>> pooled;
  auto z_key = [](const std::vector<double>& z) {
    std::vector<long long> k;
    for (double v : z) k.push_back(v > 0.5 ? 1 : 0);
    return k;
  };

  // Degenerate region {0}: a single SP1 call at x = 0 settles everything.
  bool degenerate = true;
  for (std::size_t j = 0; j < cb.core_dim; ++j)
    if (cb.x_hi[j] - cb.x_lo[j] > 1e-12) degenerate = false;
  if (degenerate) {
    AttackVector zero = attack_of(cb, std::vector<double>(cb.core_dim, 0.0));
    auto sp1 = solve_sp1(cb, zero, params);
    rep.status = RDStatus::Converged;
    rep.objective = sp1.value;
    rep.attack = zero;
    rep.operator_y = sp1.y;
    rep.commitment_z = sp1.z_bits;
    st.lower_bound = st.upper_bound = sp1.value;
    st.log.push_back({0, sp1.value, sp1.value, bits_of(sp1.z_bits), 0.0, "", 0.0});
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
  }

  milp::SolveParams solver = params.solver;
  solver.backend = params.backend;

  MasterLayout ml;
  milp::Solution msol;
  bool have_master_solution = false;

  for (int k = 0; k < params.iteration_cap; ++k) {
    ml = build_master(cb, st.mu_pool, st.nu_pool, params);
    milp::SolveParams msp = solver;
    if (!x_best.empty()) {
      if (auto start = complete_master_start(cb, ml, x_best, best_sp1, params))
        msp.mip_start = std::move(*start);
    }
    msol = milp::solve(ml.model, msp);
    have_master_solution = msol.optimal();
    if (msol.status == SolveStatus::Infeasible) {
      if (urd_mode) {
        rep.status = RDStatus::MasterInfeasible;
        rep.diagnostics.notes.push_back(
            "master infeasible: a pooled commitment admits no dispatch for some stealthy "
            "attack; this is the known failure mode of skipping the feasibility check");
        break;
      }
      // Two repairable causes: a dual big-M below the optimal multipliers
      // (strangles exact copies), or a penalty below the cost scale (makes
      // the V-set of a penalized copy empty because E'v = -c is unreachable
      // under v <= rho).
      rep.status = RDStatus::Stalled;
      out.want_bigm_double = true;
      if (!st.nu_pool.empty()) out.want_rho_escalation = true;
      rep.diagnostics.notes.push_back("master infeasible; dual big-M or penalty too tight");
      break;
    }
    if (!msol.optimal()) {
      rep.status = RDStatus::IterationLimit;
      break;
    }
    if (msol.objective > ub + 1e-6 * (1.0 + std::abs(ub)))
      rep.diagnostics.notes.push_back("upper bound increased at iteration " +
                                      std::to_string(k));
    ub = msol.objective;
    st.upper_bound = ub;

    std::vector<double> x_core(cb.core_dim);
    for (std::size_t j = 0; j < cb.core_dim; ++j)
      x_core[j] = msol.x[static_cast<std::size_t>(ml.x_offset) + j];

    if (ub - lb <= params.epsilon) {
      st.log.push_back({k, ub, lb, "", 0.0, "", 0.0});
      rep.status = RDStatus::Converged;
      break;
    }

    auto sp1 = solve_sp1(cb, attack_of(cb, x_core), params);
    // duals of the LP at (x*, z*) feed the penalty audit
    {
      auto lp = lower_level_model(cb, x_core, &sp1.z_bits);
      auto lsol = milp::solve(lp, solver);
      if (lsol.optimal())
        for (double d : lsol.duals) out.max_dual_seen = std::max(out.max_dual_seen, std::abs(d));
    }
    if (sp1.value > lb) {
      lb = sp1.value;
      x_best = x_core;
      best_sp1 = sp1;
    }
    st.lower_bound = lb;

    if (ub < lb - 1e-6 * (1.0 + std::abs(lb))) {
      out.want_rho_escalation = true;
      rep.diagnostics.notes.push_back("bound crossing UB < LB; penalty too small");
      rep.status = RDStatus::Stalled;
      break;
    }

    IterationRecord rec{k, ub, lb, bits_of(sp1.z_bits), 0.0, "", 0.0};

    if (pooled.count(z_key(sp1.z_bits))) {
      // A repeated commitment implies the bounds have met (up to numerics).
      rec.classification = "repeat";
      st.log.push_back(rec);
      if (ub - lb <= std::max(params.epsilon, 1e-6 * (1.0 + std::abs(ub)))) {
        rep.status = RDStatus::Converged;
      } else {
        rep.status = RDStatus::Stalled;
        rep.diagnostics.notes.push_back("commitment reclassification with open bounds");
        rep.diagnostics.marked_unsound = true;
      }
      break;
    }
    pooled.insert(z_key(sp1.z_bits));

    if (use_sp2) {
      auto sp2 = solve_sp2(cb, sp1.z_bits, params);
      rep.diagnostics.big_m_doubled = rep.diagnostics.big_m_doubled || sp2.big_m_doubled;
      rep.diagnostics.marked_unsound = rep.diagnostics.marked_unsound || sp2.unsound;
      rec.gamma_f = sp2.gamma_f;
      if (sp2.feasible_for_all_x) {
        st.mu_pool.push_back(sp1.z_bits);
        rec.classification = "mu";
      } else {
        st.nu_pool.push_back(sp1.z_bits);
        rec.classification = "nu";
      }
    } else {
      st.mu_pool.push_back(sp1.z_bits);
      rec.classification = "mu";
    }
    st.log.push_back(rec);
    st.k = k + 1;
    if (k + 1 >= params.iteration_cap) rep.status = RDStatus::IterationLimit;
  }

  // Penalized-cut audit at the final master solution: a binding (13f) with
  // positive slack means the optimum is resting on a penalty term.
  if (have_master_solution && rep.status == RDStatus::Converged) {
    for (const auto& copy : ml.copies) {
      if (!copy.penalized || copy.cut_row < 0) continue;
      const auto& row = ml.model.rows[static_cast<std::size_t>(copy.cut_row)];
      const double activity = ml.model.row_activity(row, msol.x);
      double total_slack = 0.0;
      for (std::size_t i = 0; i < cb.dim_p(); ++i)
        total_slack += msol.x[static_cast<std::size_t>(copy.slack_offset) + i];
      if (total_slack > 1e-6 && activity >= row.rhs - 1e-6 * (1.0 + std::abs(row.rhs))) {
        out.want_rho_escalation = true;
        rep.diagnostics.notes.push_back("penalized cut binding with positive slack");
      }
    }
    for (const auto& copy : ml.copies) {
      for (std::size_t i = 0; i < cb.dim_p(); ++i)
        out.max_dual_seen = std::max(
            out.max_dual_seen,
            std::abs(msol.x[static_cast<std::size_t>(copy.dual_offset) + i]));
      if (milp::big_m_audit_flagged(ml.model, copy.pairs, msol.x)) {
        out.want_bigm_double = true;
        rep.diagnostics.notes.push_back("complementarity variable at its big-M bound");
      }
    }
  }
  if (!st.nu_pool.empty() && params.rho <= 1.01 * out.max_dual_seen) {
    out.want_rho_escalation = true;
    rep.diagnostics.notes.push_back("penalty below the largest observed shadow price");
  }

  if (x_best.empty()) {
    // Converged on the first master check without an SP1 pass.
    auto sp1 = solve_sp1(cb, attack_of(cb, std::vector<double>(cb.core_dim, 0.0)), params);
    x_best = std::vector<double>(cb.core_dim, 0.0);
    best_sp1 = sp1;
    lb = sp1.value;
  }
  rep.objective = lb;
  rep.attack = attack_of(cb, x_best);
  rep.operator_y = best_sp1.y;
  rep.commitment_z = best_sp1.z_bits;
  rep.mu_found = st.mu_pool.size();
  rep.nu_found = st.nu_pool.size();
  st.lower_bound = lb;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

SolveReport run_with_escalation(const CompactBilevel& cb, const RDParams& params, bool use_sp2,
                                bool urd_mode) {
  RDParams p = params;
  Diagnostics diag;
  bool bigm_doubled = false;
  for (int attempt = 0;; ++attempt) {
    auto loop = run_rd_loop(cb, p, use_sp2, urd_mode);
    loop.report.diagnostics.rho_escalations = diag.rho_escalations;
    loop.report.diagnostics.rho_final = p.rho;
    loop.report.diagnostics.big_m_doubled =
        loop.report.diagnostics.big_m_doubled || bigm_doubled;
    for (const auto& n : diag.notes) loop.report.diagnostics.notes.push_back(n);

    if (loop.want_bigm_double && !bigm_doubled) {
      bigm_doubled = true;
      diag.notes.push_back("dual big-M doubled");
      p.big_m = 2.0 * dual_big_m(cb, p);
      continue;
    }
    if (loop.want_bigm_double && !loop.want_rho_escalation && !urd_mode &&
        loop.report.status == RDStatus::Stalled) // infeasible with both levers spent
      throw SolveError("master problem infeasible despite a nonempty attack region");

    if (!loop.want_rho_escalation || attempt >= p.max_penalty_escalations || p.rho >= 1e8) {
      if (loop.want_rho_escalation || loop.want_bigm_double)
        loop.report.diagnostics.marked_unsound = true;
      return loop.report;
    }
    diag.rho_escalations++;
    diag.notes.push_back("penalty escalated to " + std::to_string(p.rho * 10.0));
    p.rho *= 10.0;
    if (!p.rho_rows.empty())
      for (auto& v : p.rho_rows) v *= 10.0;
  }
}

} // namespace

SolveReport solve_om(const CompactBilevel& cb, const RDParams& params) {
  return run_with_escalation(cb, params, /*use_sp2=*/true, /*urd_mode=*/false);
}

SolveReport solve_urd(const CompactBilevel& cb, const RDParams& params) {
  return run_with_escalation(cb, params, /*use_sp2=*/false, /*urd_mode=*/true);
}

double solve_kkt_r(const CompactBilevel& cb, const oracle::ZClassification& classes,
                   const RDParams& params, std::size_t r_cap, Diagnostics* diagnostics) {
  if (cb.dim_r() > r_cap)
    throw SolveError("KKT-R: r = " + std::to_string(cb.dim_r()) + " exceeds the cap " +
                     std::to_string(r_cap));
  RDParams p = params;
  Diagnostics local;
  for (int attempt = 0;; ++attempt) {
    std::vector<std::vector<double>> mu_pool, nu_pool;
    for (std::size_t i = 0; i < classes.z_bits.size(); ++i)
      (classes.mu_feasible[i] ? mu_pool : nu_pool).push_back(classes.z_bits[i]);
    auto ml = build_master(cb, mu_pool, nu_pool, p);

    milp::SolveParams sp = p.solver;
    sp.backend = p.backend;
    // Warm incumbent from cheap candidate attacks (zero plus the
    // classification witnesses); branch-and-bound still proves the bound.
    {
      std::vector<std::vector<double>> candidates{std::vector<double>(cb.core_dim, 0.0)};
      for (const auto& w : classes.witness)
        if (w) candidates.push_back(core_of(cb, *w));
      double best_val = -kInf;
      std::optional<std::vector<double>> best_start;
      for (const auto& cand : candidates) {
        auto sp1 = solve_sp1(cb, attack_of(cb, cand), p);
        if (sp1.value <= best_val) continue;
        if (auto start = complete_master_start(cb, ml, cand, sp1, p)) {
          best_val = sp1.value;
          best_start = std::move(start);
        }
      }
      if (best_start) sp.mip_start = std::move(*best_start);
    }

    auto sol = milp::solve(ml.model, sp);
    bool escalate = false;
    if (sol.status == SolveStatus::Infeasible) {
      // Penalty below the cost scale empties the penalized V-sets.
      escalate = true;
    } else if (!sol.optimal()) {
      throw SolveError("KKT-R did not solve to optimality");
    } else {
      for (const auto& copy : ml.copies) {
        if (!copy.penalized) continue;
        const auto& row = ml.model.rows[static_cast<std::size_t>(copy.cut_row)];
        double total_slack = 0.0;
        for (std::size_t i = 0; i < cb.dim_p(); ++i)
          total_slack += sol.x[static_cast<std::size_t>(copy.slack_offset) + i];
        if (total_slack > 1e-6 &&
            ml.model.row_activity(row, sol.x) >= row.rhs - 1e-6 * (1.0 + std::abs(row.rhs)))
          escalate = true;
      }
    }
    if (!escalate || attempt >= p.max_penalty_escalations || p.rho >= 1e8) {
      if (sol.status == SolveStatus::Infeasible)
        throw SolveError("KKT-R infeasible after exhausting penalty escalations");
      if (diagnostics) {
        *diagnostics = local;
        diagnostics->rho_final = p.rho;
        diagnostics->marked_unsound = escalate;
      }
      return sol.objective;
    }
    local.rho_escalations++;
    local.notes.push_back("KKT-R penalty escalated to " + std::to_string(p.rho * 10.0));
    p.rho *= 10.0;
  }
}

Model4Result solve_model4(const IEGSInstance& inst, const CompactBilevel& cb,
                          const RDParams& params) {
  // Commitments all on; sigma pinned to the no-attack fill pattern so the
  // lower level is a pure LP.
  auto base = oracle::evaluate_dispatch(inst, AttackVector::zeros(inst), nullptr);
  if (!base.feasible) throw SolveError("model (4): no-attack dispatch infeasible");
  std::vector<double> zbar;
  for (std::size_t g = 0; g < inst.power.generators.size(); ++g) zbar.push_back(1.0);
  for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l)
    for (int k = 0; k + 1 < inst.pwl_segments; ++k)
      zbar.push_back(k < base.pipe_segment[l] ? 1.0 : 0.0);
  if (zbar.size() != cb.dim_r()) throw DimensionError("model (4): z dimension mismatch");

  // Single exact KKT copy, objective = the copy's own cost (the operator's
  // unique-optimum value at each x).
  Model m;
  m.obj_sense = milp::ObjSense::Max;
  for (std::size_t j = 0; j < cb.upper.vars.size(); ++j) {
    auto v = cb.upper.vars[j];
    if (j < cb.core_dim) {
      v.lo = cb.x_lo[j];
      v.hi = cb.x_hi[j];
    }
    m.add_var("x[" + v.name + "]", v.kind, v.lo, v.hi);
  }
  for (const auto& row : cb.upper.rows) m.add_row("ur[" + row.name + "]", row.sense, row.rhs,
                                                  row.coeffs);
  const int y_off = static_cast<int>(m.num_vars());
  for (std::size_t j = 0; j < cb.dim_q(); ++j)
    m.add_continuous("y[" + cb.y_names[j] + "]", cb.y_lo[j], cb.y_hi[j], cb.y_cost[j]);
  const int mu_off = static_cast<int>(m.num_vars());
  const double m_dual = dual_big_m(cb, params);
  for (std::size_t i = 0; i < cb.dim_p(); ++i)
    m.add_continuous("mu#" + std::to_string(i), 0.0, m_dual);

  std::vector<milp::ComplementarityPair> pairs;
  for (std::size_t i = 0; i < cb.dim_p(); ++i) {
    const auto& row = cb.lower[i];
    const double rhs = row.rhs - fz_term(row, zbar);
    std::vector<std::pair<int, double>> coeffs;
    for (const auto& [c, a] : row.on_x) coeffs.push_back({c, a});
    for (const auto& [c, a] : row.on_y) coeffs.push_back({y_off + c, a});
    m.add_row("feas[" + row.name + "]", Sense::LE, rhs, coeffs);

    milp::ComplementarityPair pr;
    pr.label = "m4#" + std::to_string(i);
    pr.dual = {{mu_off + static_cast<int>(i), 1.0}};
    pr.big_m_dual = m_dual;
    pr.slack_constant = rhs;
    for (const auto& [c, a] : coeffs) pr.slack.push_back({c, -a});
    pr.big_m_slack = clamp_m(rhs - expr_min(cb, row.on_x, row.on_y), params.big_m);
    pairs.push_back(std::move(pr));
  }
  for (std::size_t j = 0; j < cb.dim_q(); ++j) {
    std::vector<std::pair<int, double>> coeffs;
    for (std::size_t i = 0; i < cb.dim_p(); ++i)
      for (const auto& [c, a] : cb.lower[i].on_y)
        if (static_cast<std::size_t>(c) == j)
          coeffs.push_back({mu_off + static_cast<int>(i), a});
    m.add_row("stat[" + cb.y_names[j] + "]", Sense::EQ, -cb.y_cost[j], std::move(coeffs));
  }
  milp::linearize_complementarity(m, pairs);

  milp::SolveParams sp = params.solver;
  sp.backend = params.backend;
  auto sol = milp::solve(m, sp);
  if (!sol.optimal()) throw SolveError("model (4) reformulation did not solve");

  Model4Result out;
  out.objective = sol.objective;
  std::vector<double> core(cb.core_dim);
  for (std::size_t j = 0; j < cb.core_dim; ++j) core[j] = sol.x[j];
  out.attack = attack_of(cb, core);
  out.y.assign(sol.x.begin() + y_off, sol.x.begin() + y_off + static_cast<long>(cb.dim_q()));
  return out;
}

} // namespace iegs::rd
