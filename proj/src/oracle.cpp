#include "iegs/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "iegs/errors.hpp"
#include "iegs/instance.hpp"
#include "iegs/ptdf.hpp"
#include "iegs/solve.hpp"

namespace iegs::oracle {

using milp::kInf;
using milp::Model;
using milp::Sense;

namespace {

// Deterministic chunked parallel map: results land by index, reduction order
// is fixed regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t count, bool parallel, Fn&& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (!parallel || count < 16 || hw == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const unsigned nthreads = std::min<unsigned>(hw, 8);
  std::vector<std::thread> pool;
  std::size_t chunk = (count + nthreads - 1) / nthreads;
  for (unsigned t = 0; t < nthreads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

double signed_square(double g) { return g * std::abs(g); }

// Dispatch LP for one (commitment, segment-choice) pattern. Bounds live on
// the variables here; this path never touches the compact rows.
struct PhysicsLp {
  Model m;
  std::vector<int> p_gen, shed_p, g_well, g_pipe, g_comp, pi, shed_g, p2g;
};

PhysicsLp build_dispatch_lp(const IEGSInstance& inst, const PtdfMatrix& ptdf,
                            const AttackVector& x, const std::vector<int>& uc,
                            const std::vector<int>& segment) {
  const auto& ps = inst.power;
  const auto& gs = inst.gas;
  PhysicsLp out;
  Model& m = out.m;

  for (std::size_t g = 0; g < ps.generators.size(); ++g) {
    const auto& gen = ps.generators[g];
    const double lo = uc[g] ? gen.p_min : 0.0;
    const double hi = uc[g] ? gen.p_max : 0.0;
    out.p_gen.push_back(m.add_continuous("p[" + gen.id + "]", lo, hi, gen.cost));
  }
  for (std::size_t d = 0; d < ps.loads.size(); ++d) {
    const double falsified = ps.loads[d].demand + x.dp[d];
    out.shed_p.push_back(m.add_continuous("sp[" + ps.loads[d].id + "]", 0.0,
                                          std::max(falsified, 0.0), ps.loads[d].shed_cost));
    if (falsified < -1e-9) {
      // Negative falsified load leaves no feasible shed range.
      m.add_row("void", Sense::LE, -1.0, {{out.shed_p.back(), 0.0}});
    }
  }
  for (const auto& w : gs.wells)
    out.g_well.push_back(m.add_continuous("gw[" + w.id + "]", 0.0, w.capacity, w.cost));
  for (std::size_t l = 0; l < gs.pipelines.size(); ++l) {
    const auto& p = gs.pipelines[l];
    const auto sch = pwl::build_scheme(p.limit, inst.pwl_segments);
    const int seg = segment[l];
    out.g_pipe.push_back(m.add_continuous(
        "gl[" + p.id + "]", sch.breakpoints[static_cast<std::size_t>(seg)],
        sch.breakpoints[static_cast<std::size_t>(seg) + 1], 0.0));
  }
  for (const auto& c : gs.compressors)
    out.g_comp.push_back(m.add_continuous("gc[" + c.id + "]", 0.0, c.limit, 0.0));
  for (const auto& nd : gs.nodes)
    out.pi.push_back(m.add_continuous("pi[" + nd.id + "]", nd.pressure_min, nd.pressure_max, 0.0));
  for (std::size_t d = 0; d < gs.loads.size(); ++d) {
    const double falsified = gs.loads[d].demand + x.dg[d];
    out.shed_g.push_back(m.add_continuous("sg[" + gs.loads[d].id + "]", 0.0,
                                          std::max(falsified, 0.0), gs.loads[d].shed_cost));
    if (falsified < -1e-9) m.add_row("voidg", Sense::LE, -1.0, {{out.shed_g.back(), 0.0}});
  }
  for (const auto& f : inst.p2g)
    out.p2g.push_back(m.add_continuous("pf[" + f.id + "]", 0.0, f.capacity, 0.0));

  // Power balance over falsified loads.
  {
    std::vector<std::pair<int, double>> coeffs;
    double rhs = 0.0;
    for (int v : out.p_gen) coeffs.push_back({v, 1.0});
    for (std::size_t d = 0; d < ps.loads.size(); ++d) {
      coeffs.push_back({out.shed_p[d], 1.0});
      rhs += ps.loads[d].demand + x.dp[d];
    }
    for (int v : out.p2g) coeffs.push_back({v, -1.0});
    m.add_row("p-balance", Sense::EQ, rhs, coeffs);
  }
  // Line limits via PTDF.
  for (std::size_t l = 0; l < ps.lines.size(); ++l) {
    std::vector<std::pair<int, double>> coeffs;
    double base = 0.0;
    for (std::size_t g = 0; g < ps.generators.size(); ++g) {
      const double beta = ptdf.beta[l][power_node_index(ps, ps.generators[g].node)];
      if (beta != 0.0) coeffs.push_back({out.p_gen[g], beta});
    }
    for (std::size_t f = 0; f < inst.p2g.size(); ++f) {
      const double beta = ptdf.beta[l][power_node_index(ps, inst.p2g[f].power_node)];
      if (beta != 0.0) coeffs.push_back({out.p2g[f], -beta});
    }
    for (std::size_t d = 0; d < ps.loads.size(); ++d) {
      const double beta = ptdf.beta[l][power_node_index(ps, ps.loads[d].node)];
      if (beta == 0.0) continue;
      base -= beta * (ps.loads[d].demand + x.dp[d]);
      coeffs.push_back({out.shed_p[d], beta});
    }
    m.add_row("line+[" + ps.lines[l].id + "]", Sense::LE, ps.lines[l].limit - base, coeffs);
    auto neg = coeffs;
    for (auto& [c, v] : neg) v = -v;
    m.add_row("line-[" + ps.lines[l].id + "]", Sense::LE, ps.lines[l].limit + base, neg);
  }
  // Weymouth on the chosen segment: f(X_j) + slope*(g - X_j) = W*(pi_m - pi_n).
  for (std::size_t l = 0; l < gs.pipelines.size(); ++l) {
    const auto& p = gs.pipelines[l];
    const auto sch = pwl::build_scheme(p.limit, inst.pwl_segments);
    const int seg = segment[l];
    const double xj = sch.breakpoints[static_cast<std::size_t>(seg)];
    const double slope = sch.slopes[static_cast<std::size_t>(seg)];
    m.add_row("wey[" + p.id + "]", Sense::EQ, -(signed_square(xj) - slope * xj),
              {{out.g_pipe[l], slope},
               {out.pi[gas_node_index(gs, p.from)], -p.weymouth},
               {out.pi[gas_node_index(gs, p.to)], p.weymouth}});
  }
  // Compressor pressure boost.
  for (std::size_t c = 0; c < gs.compressors.size(); ++c) {
    const auto& cc = gs.compressors[c];
    m.add_row("comp[" + cc.id + "]", Sense::LE, 0.0,
              {{out.pi[gas_node_index(gs, cc.to)], 1.0},
               {out.pi[gas_node_index(gs, cc.from)], -cc.ratio}});
  }
  // Gas nodal balance over falsified loads.
  for (std::size_t n = 0; n < gs.nodes.size(); ++n) {
    std::vector<std::pair<int, double>> coeffs;
    double rhs = 0.0;
    for (std::size_t w = 0; w < gs.wells.size(); ++w)
      if (gas_node_index(gs, gs.wells[w].node) == n) coeffs.push_back({out.g_well[w], 1.0});
    for (std::size_t l = 0; l < gs.pipelines.size(); ++l) {
      if (gas_node_index(gs, gs.pipelines[l].to) == n) coeffs.push_back({out.g_pipe[l], 1.0});
      if (gas_node_index(gs, gs.pipelines[l].from) == n) coeffs.push_back({out.g_pipe[l], -1.0});
    }
    for (std::size_t c = 0; c < gs.compressors.size(); ++c) {
      if (gas_node_index(gs, gs.compressors[c].to) == n) coeffs.push_back({out.g_comp[c], 1.0});
      if (gas_node_index(gs, gs.compressors[c].from) == n)
        coeffs.push_back({out.g_comp[c], -1.0});
    }
    for (std::size_t d = 0; d < gs.loads.size(); ++d)
      if (gas_node_index(gs, gs.loads[d].node) == n) {
        coeffs.push_back({out.shed_g[d], 1.0});
        rhs += gs.loads[d].demand + x.dg[d];
      }
    for (std::size_t g = 0; g < ps.generators.size(); ++g) {
      const auto& gen = ps.generators[g];
      if (gen.kind == FuelKind::GasFired && gas_node_index(gs, gen.gas_node) == n)
        coeffs.push_back({out.p_gen[g], -gen.gamma});
    }
    for (std::size_t f = 0; f < inst.p2g.size(); ++f)
      if (gas_node_index(gs, inst.p2g[f].gas_node) == n)
        coeffs.push_back({out.p2g[f], inst.p2g[f].gamma});
    if (coeffs.empty()) continue;
    m.add_row("g-balance[" + gs.nodes[n].id + "]", Sense::EQ, rhs, coeffs);
  }
  return out;
}

std::vector<std::vector<int>> segment_patterns(const IEGSInstance& inst) {
  std::vector<std::vector<int>> patterns{{}};
  for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l) {
    std::vector<std::vector<int>> next;
    for (const auto& base : patterns)
      for (int seg = 0; seg < inst.pwl_segments; ++seg) {
        auto p = base;
        p.push_back(seg);
        next.push_back(std::move(p));
      }
    patterns = std::move(next);
  }
  return patterns;
}

DispatchResult run_dispatch_lp(const IEGSInstance& inst, const PtdfMatrix& ptdf,
                               const AttackVector& x, const std::vector<int>& uc,
                               const std::vector<int>& segment) {
  auto lp = build_dispatch_lp(inst, ptdf, x, uc, segment);
  auto sol = milp::solve(lp.m);
  DispatchResult r;
  r.feasible = sol.optimal();
  if (!r.feasible) return r;
  r.cost = sol.objective;
  auto grab = [&](const std::vector<int>& idx) {
    std::vector<double> v;
    for (int j : idx) v.push_back(sol.x[static_cast<std::size_t>(j)]);
    return v;
  };
  r.p_gen = grab(lp.p_gen);
  r.shed_power = grab(lp.shed_p);
  r.g_well = grab(lp.g_well);
  r.g_pipeline = grab(lp.g_pipe);
  r.g_compressor = grab(lp.g_comp);
  r.pi_node = grab(lp.pi);
  r.shed_gas = grab(lp.shed_g);
  r.p2g_draw = grab(lp.p2g);
  r.commitment = uc;
  r.pipe_segment = segment;
  // Line flows for reporting.
  std::vector<double> inj(inst.power.nodes.size(), 0.0);
  for (std::size_t g = 0; g < inst.power.generators.size(); ++g)
    inj[power_node_index(inst.power, inst.power.generators[g].node)] += r.p_gen[g];
  for (std::size_t f = 0; f < inst.p2g.size(); ++f)
    inj[power_node_index(inst.power, inst.p2g[f].power_node)] -= r.p2g_draw[f];
  for (std::size_t d = 0; d < inst.power.loads.size(); ++d)
    inj[power_node_index(inst.power, inst.power.loads[d].node)] -=
        inst.power.loads[d].demand + x.dp[d] - r.shed_power[d];
  r.line_flow = ptdf_flows(ptdf, inj);
  return r;
}

} // namespace

DispatchResult evaluate_dispatch(const IEGSInstance& inst, const AttackVector& x,
                                 const std::vector<int>* uc_fixed) {
  const auto ptdf = build_ptdf(inst.power);
  const auto segs = segment_patterns(inst);
  std::vector<std::vector<int>> ucs;
  if (uc_fixed) {
    ucs.push_back(*uc_fixed);
  } else {
    const std::size_t ng = inst.power.generators.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << ng); ++mask) {
      std::vector<int> uc(ng);
      for (std::size_t g = 0; g < ng; ++g) uc[g] = static_cast<int>((mask >> g) & 1);
      ucs.push_back(std::move(uc));
    }
  }
  DispatchResult best;
  for (const auto& uc : ucs)
    for (const auto& seg : segs) {
      auto r = run_dispatch_lp(inst, ptdf, x, uc, seg);
      if (!r.feasible) continue;
      if (!best.feasible || r.cost < best.cost - 1e-9) best = std::move(r);
    }
  return best;
}

DispatchResult evaluate_dispatch_at_z(const IEGSInstance& inst, const AttackVector& x,
                                      const std::vector<double>& z_bits,
                                      const CompactBilevel& compact) {
  if (z_bits.size() != compact.dim_r()) throw DimensionError("z dimension mismatch");
  const std::size_t ng = inst.power.generators.size();
  std::vector<int> uc(ng);
  for (std::size_t g = 0; g < ng; ++g) uc[g] = z_bits[g] > 0.5 ? 1 : 0;
  // sigma bits follow the commitments, K-1 per pipeline; only the monotone
  // fill patterns describe a segment, anything else is infeasible.
  std::vector<int> segment(inst.gas.pipelines.size(), 0);
  std::size_t pos = ng;
  for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l) {
    int ones = 0;
    bool monotone = true;
    bool seen_zero = false;
    for (int k = 0; k + 1 < inst.pwl_segments; ++k, ++pos) {
      const bool on = z_bits[pos] > 0.5;
      if (on && seen_zero) monotone = false;
      if (!on) seen_zero = true;
      if (on) ++ones;
    }
    if (!monotone) {
      DispatchResult r;
      r.feasible = false;
      return r;
    }
    segment[l] = ones;
  }
  const auto ptdf = build_ptdf(inst.power);
  return run_dispatch_lp(inst, ptdf, x, uc, segment);
}

RealizedResult evaluate_realized_cost(const IEGSInstance& inst, const AttackVector& x) {
  RealizedResult out;
  out.falsified = evaluate_dispatch(inst, x, nullptr);
  if (!out.falsified.feasible)
    throw SolveError("falsified-world dispatch infeasible for the given attack");
  out.falsified_cost = out.falsified.cost;
  out.commitment = out.falsified.commitment;
  out.realized = evaluate_dispatch(inst, AttackVector::zeros(inst), &out.commitment);
  out.realized_feasible = out.realized.feasible;
  out.realized_cost = out.realized.feasible ? out.realized.cost : kInf;
  return out;
}

namespace {

std::vector<std::vector<double>> side_vertices(const std::vector<double>& widths) {
  const std::size_t n = widths.size();
  std::vector<std::vector<double>> verts;
  if (n == 0) return {{}};
  if (n == 1) return {{0.0}};
  std::set<std::vector<long long>> seen;
  auto push = [&](std::vector<double> v) {
    std::vector<long long> key(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) key[i] = llround(v[i] * 1e9);
    if (seen.insert(key).second) verts.push_back(std::move(v));
  };
  for (std::size_t free = 0; free < n; ++free) {
    const std::size_t others = n - 1;
    for (std::size_t mask = 0; mask < (std::size_t{1} << others); ++mask) {
      std::vector<double> v(n, 0.0);
      double sum = 0.0;
      std::size_t bit = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i == free) continue;
        const double s = ((mask >> bit) & 1) ? 1.0 : -1.0;
        v[i] = s * widths[i];
        sum += v[i];
        ++bit;
      }
      v[free] = -sum;
      if (std::abs(v[free]) <= widths[free] + 1e-12) push(std::move(v));
    }
  }
  return verts;
}

} // namespace

std::vector<AttackVector> region_vertices(const IEGSInstance& inst) {
  std::vector<double> wp, wg;
  for (const auto& d : inst.power.loads) wp.push_back(inst.tau_p * d.demand);
  for (const auto& d : inst.gas.loads) wg.push_back(inst.tau_g * d.demand);
  const auto vp = side_vertices(wp);
  const auto vg = side_vertices(wg);
  std::vector<AttackVector> out;
  for (const auto& a : vp)
    for (const auto& b : vg) out.push_back({a, b});
  return out;
}

double feasibility_slack(const CompactBilevel& cb, const AttackVector& x,
                         const std::vector<double>& z_bits) {
  std::vector<double> x_core(x.dp);
  x_core.insert(x_core.end(), x.dg.begin(), x.dg.end());
  const auto b = cb.rhs_minus_dx(x_core);
  Model m;
  for (const auto& yn : cb.y_names) m.add_continuous(yn, -kInf, kInf, 0.0);
  std::vector<int> slacks;
  for (std::size_t i = 0; i < cb.lower.size(); ++i)
    slacks.push_back(m.add_continuous("s#" + std::to_string(i), 0.0, kInf, 1.0));
  for (std::size_t i = 0; i < cb.lower.size(); ++i) {
    const auto& r = cb.lower[i];
    double rhs = b[i];
    for (const auto& [c, v] : r.on_z) rhs -= v * z_bits[static_cast<std::size_t>(c)];
    std::vector<std::pair<int, double>> coeffs(r.on_y);
    coeffs.push_back({slacks[i], -1.0});
    m.add_row(r.name, Sense::LE, rhs, std::move(coeffs));
  }
  auto sol = milp::solve(m);
  if (!sol.optimal()) throw SolveError("feasibility-slack LP did not solve");
  return sol.objective;
}

ZClassification classify_z(const IEGSInstance& inst, const CompactBilevel& cb,
                           const SearchSpec& spec) {
  const std::size_t r = cb.dim_r();
  if (r > spec.max_r)
    throw SolveError("classify_z: r exceeds the oracle cap (" + std::to_string(spec.max_r) + ")");
  const auto vertices = region_vertices(inst);

  ZClassification out;
  const std::size_t count = std::size_t{1} << r;
  out.z_bits.resize(count);
  out.mu_feasible.assign(count, false);
  out.gamma_f.assign(count, 0.0);
  out.witness.resize(count);

  parallel_for(count, spec.parallel, [&](std::size_t mask) {
    std::vector<double> z(r, 0.0);
    for (std::size_t k = 0; k < r; ++k) z[k] = static_cast<double>((mask >> k) & 1);
    double worst = 0.0;
    std::optional<AttackVector> witness;
    for (const auto& v : vertices) {
      const double slack = feasibility_slack(cb, v, z);
      if (slack > worst) {
        worst = slack;
        witness = v;
      }
    }
    out.z_bits[mask] = std::move(z);
    out.gamma_f[mask] = worst;
    out.mu_feasible[mask] = worst <= 1e-7;
    if (!out.mu_feasible[mask]) out.witness[mask] = witness;
  });
  for (std::size_t i = 0; i < count; ++i)
    (out.mu_feasible[i] ? out.mu_count : out.nu_count)++;
  return out;
}

BruteForceResult brute_force_bilevel(const IEGSInstance& inst, const CompactBilevel& cb,
                                     const SearchSpec& spec) {
  if (cb.dim_r() > spec.max_r)
    throw SolveError("brute force: r exceeds the oracle cap");

  // Candidate points: all polytope vertices, plus a uniform grid over the
  // free coordinates (the last load of each carrier absorbs balance).
  std::vector<AttackVector> points = region_vertices(inst);
  const std::size_t np = inst.power.loads.size();
  const std::size_t ng = inst.gas.loads.size();
  const std::size_t free_p = np > 0 ? np - 1 : 0;
  const std::size_t free_g = ng > 0 ? ng - 1 : 0;

  if (free_p + free_g <= spec.max_free_dims && spec.grid_points >= 2) {
    std::vector<double> wp, wg;
    for (const auto& d : inst.power.loads) wp.push_back(inst.tau_p * d.demand);
    for (const auto& d : inst.gas.loads) wg.push_back(inst.tau_g * d.demand);
    const std::size_t nfree = free_p + free_g;
    std::vector<std::size_t> idx(nfree, 0);
    const auto G = static_cast<std::size_t>(spec.grid_points);
    bool done = nfree == 0;
    auto coord = [&](double width, std::size_t step) {
      return G <= 1 ? 0.0 : -width + 2.0 * width * static_cast<double>(step) /
                                          static_cast<double>(G - 1);
    };
    while (!done) {
      AttackVector x{std::vector<double>(np, 0.0), std::vector<double>(ng, 0.0)};
      double sum = 0.0;
      for (std::size_t i = 0; i < free_p; ++i) {
        x.dp[i] = coord(wp[i], idx[i]);
        sum += x.dp[i];
      }
      bool ok = true;
      if (np > 0) {
        x.dp[np - 1] = -sum;
        ok = std::abs(x.dp[np - 1]) <= wp[np - 1] + 1e-12;
      }
      if (ok) {
        sum = 0.0;
        for (std::size_t i = 0; i < free_g; ++i) {
          x.dg[i] = coord(wg[i], idx[free_p + i]);
          sum += x.dg[i];
        }
        if (ng > 0) {
          x.dg[ng - 1] = -sum;
          ok = std::abs(x.dg[ng - 1]) <= wg[ng - 1] + 1e-12;
        }
      }
      if (ok) points.push_back(std::move(x));
      // odometer
      std::size_t k = 0;
      for (; k < nfree; ++k) {
        if (++idx[k] < G) break;
        idx[k] = 0;
      }
      done = (k == nfree);
    }
  }

  BruteForceResult out;
  out.points_searched = points.size();
  std::vector<double> values(points.size(), -kInf);
  parallel_for(points.size(), spec.parallel, [&](std::size_t i) {
    auto d = evaluate_dispatch(inst, points[i], nullptr);
    values[i] = d.feasible ? d.cost : -kInf;
  });
  out.value = -kInf;
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.trace.push_back({points[i], values[i]});
    if (values[i] > out.value) {
      out.value = values[i];
      out.best = points[i];
    }
  }
  if (out.value == -kInf) throw SolveError("brute force: no feasible dispatch at any point");
  return out;
}

} // namespace iegs::oracle
