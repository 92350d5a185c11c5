#include "iegs/stealth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "iegs/errors.hpp"
#include "iegs/instance.hpp"
#include "iegs/ptdf.hpp"
#include "iegs/pwl.hpp"
#include "iegs/solve.hpp"

namespace iegs {

using milp::kInf;
using milp::Model;
using milp::Sense;
using milp::VarKind;

std::size_t LinearBlock::num_binaries() const {
  std::size_t n = 0;
  for (const auto& v : vars)
    if (v.kind == VarKind::Binary) ++n;
  return n;
}

bool LinearBlock::contains(const AttackVector& x, double tol) const {
  const std::size_t n = x.dp.size() + x.dg.size();
  if (n != core_dim) throw DimensionError("attack vector dimension mismatch");
  std::vector<double> core(x.dp);
  core.insert(core.end(), x.dg.begin(), x.dg.end());

  if (vars.size() == core_dim) {
    for (const auto& row : rows) {
      double a = 0.0;
      for (const auto& [col, val] : row.coeffs) a += val * core[static_cast<std::size_t>(col)];
      const double scale = std::max(1.0, std::abs(row.rhs));
      if (row.sense == Sense::LE && a > row.rhs + tol * scale) return false;
      if (row.sense == Sense::GE && a < row.rhs - tol * scale) return false;
      if (row.sense == Sense::EQ && std::abs(a - row.rhs) > tol * scale) return false;
    }
    return true;
  }

  // Auxiliary columns present: feasibility solve with the core pinned.
  Model m;
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const auto& v = vars[j];
    if (j < core_dim)
      m.add_var(v.name, v.kind, core[j], core[j]);
    else
      m.add_var(v.name, v.kind, v.lo, v.hi);
  }
  for (const auto& row : rows) m.add_row(row.name, row.sense, row.rhs, row.coeffs);
  auto sol = milp::solve(m);
  return sol.optimal();
}

LinearBlock attack_region(const IEGSInstance& inst) {
  LinearBlock b;
  for (const auto& d : inst.power.loads)
    b.vars.push_back({"dp[" + d.id + "]", VarKind::Continuous, -kInf, kInf});
  for (const auto& d : inst.gas.loads)
    b.vars.push_back({"dg[" + d.id + "]", VarKind::Continuous, -kInf, kInf});
  b.core_dim = b.vars.size();

  const auto np = inst.power.loads.size();
  if (np > 0) {
    std::vector<std::pair<int, double>> plus, minus;
    for (std::size_t d = 0; d < np; ++d) {
      plus.push_back({static_cast<int>(d), 1.0});
      minus.push_back({static_cast<int>(d), -1.0});
    }
    b.rows.push_back({"p-balance+", Sense::LE, 0.0, plus});
    b.rows.push_back({"p-balance-", Sense::LE, 0.0, minus});
    for (std::size_t d = 0; d < np; ++d) {
      const double w = inst.tau_p * inst.power.loads[d].demand;
      b.rows.push_back({"dp-ub[" + inst.power.loads[d].id + "]", Sense::LE, w,
                        {{static_cast<int>(d), 1.0}}});
      b.rows.push_back({"dp-lb[" + inst.power.loads[d].id + "]", Sense::LE, w,
                        {{static_cast<int>(d), -1.0}}});
    }
  }
  const auto ng = inst.gas.loads.size();
  if (ng > 0) {
    std::vector<std::pair<int, double>> plus, minus;
    for (std::size_t d = 0; d < ng; ++d) {
      plus.push_back({static_cast<int>(np + d), 1.0});
      minus.push_back({static_cast<int>(np + d), -1.0});
    }
    b.rows.push_back({"g-balance+", Sense::LE, 0.0, plus});
    b.rows.push_back({"g-balance-", Sense::LE, 0.0, minus});
    for (std::size_t d = 0; d < ng; ++d) {
      const double w = inst.tau_g * inst.gas.loads[d].demand;
      b.rows.push_back({"dg-ub[" + inst.gas.loads[d].id + "]", Sense::LE, w,
                        {{static_cast<int>(np + d), 1.0}}});
      b.rows.push_back({"dg-lb[" + inst.gas.loads[d].id + "]", Sense::LE, w,
                        {{static_cast<int>(np + d), -1.0}}});
    }
  }
  return b;
}

std::vector<double> derive_power_flow_deltas(const AttackVector& x, const PtdfMatrix& ptdf,
                                             const PowerSystem& power) {
  if (x.dp.size() != power.loads.size())
    throw DimensionError("power delta dimension does not match load count");
  // Load incidence b^D is -1 at the load's node.
  std::vector<double> injections(power.nodes.size(), 0.0);
  for (std::size_t d = 0; d < power.loads.size(); ++d)
    injections[power_node_index(power, power.loads[d].node)] -= x.dp[d];
  return ptdf_flows(ptdf, injections);
}

namespace {

double signed_square(double g) { return g * std::abs(g); }

struct GasEdge {
  std::size_t from, to;
  bool passive;      // passive pipelines carry the Weymouth relation
  std::size_t index; // within its own kind
  double weymouth = 0.0;
  double baseline = 0.0;
};

struct GasGraph {
  std::size_t n = 0;
  std::vector<GasEdge> edges;
  std::vector<std::vector<std::pair<std::size_t, int>>> adj; // (edge, +1 = leaves node)
};

GasGraph build_graph(const IEGSInstance& inst) {
  GasGraph g;
  g.n = inst.gas.nodes.size();
  g.adj.assign(g.n, {});
  for (std::size_t i = 0; i < inst.gas.pipelines.size(); ++i) {
    const auto& p = inst.gas.pipelines[i];
    if (!p.baseline_flow)
      throw SolveError("pipeline '" + p.id + "' lacks a baseline flow measurement");
    GasEdge e{gas_node_index(inst.gas, p.from), gas_node_index(inst.gas, p.to), true, i,
              p.weymouth, *p.baseline_flow};
    g.adj[e.from].push_back({g.edges.size(), +1});
    g.adj[e.to].push_back({g.edges.size(), -1});
    g.edges.push_back(e);
  }
  for (std::size_t i = 0; i < inst.gas.compressors.size(); ++i) {
    const auto& c = inst.gas.compressors[i];
    GasEdge e{gas_node_index(inst.gas, c.from), gas_node_index(inst.gas, c.to), false, i, 0.0,
              0.0};
    g.adj[e.from].push_back({g.edges.size(), +1});
    g.adj[e.to].push_back({g.edges.size(), -1});
    g.edges.push_back(e);
  }
  return g;
}

} // namespace

GasDeltas derive_gas_deltas(const AttackVector& x, const IEGSInstance& inst) {
  if (x.dg.size() != inst.gas.loads.size())
    throw DimensionError("gas delta dimension does not match load count");
  GasDeltas out;
  out.dg_pipeline.assign(inst.gas.pipelines.size(), 0.0);
  out.dg_compressor.assign(inst.gas.compressors.size(), 0.0);
  out.dpi_node.assign(inst.gas.nodes.size(), 0.0);
  if (inst.gas.nodes.empty()) return out;

  GasGraph graph = build_graph(inst);
  const std::size_t n = graph.n;
  const std::size_t ne = graph.edges.size();

  // Net measurement-delta demand per node: flows must deliver these.
  std::vector<double> demand(n, 0.0);
  for (std::size_t d = 0; d < inst.gas.loads.size(); ++d)
    demand[gas_node_index(inst.gas, inst.gas.loads[d].node)] += x.dg[d];

  // Spanning forest by BFS from the lowest-index node of each component;
  // chords close independent cycles.
  std::vector<int> parent_edge(n, -1);
  std::vector<int> order;
  std::vector<bool> seen(n, false);
  std::vector<bool> in_tree(ne, false);
  std::vector<std::size_t> chords;
  for (std::size_t root = 0; root < n; ++root) {
    if (seen[root]) continue;
    seen[root] = true;
    std::vector<std::size_t> queue{root};
    order.push_back(static_cast<int>(root));
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const auto v = queue[qi];
      for (const auto& [ei, dir] : graph.adj[v]) {
        const auto& e = graph.edges[ei];
        const auto w = dir > 0 ? e.to : e.from;
        if (seen[w]) continue;
        seen[w] = true;
        in_tree[ei] = true;
        parent_edge[w] = static_cast<int>(ei);
        order.push_back(static_cast<int>(w));
        queue.push_back(w);
      }
    }
  }
  for (std::size_t ei = 0; ei < ne; ++ei)
    if (!in_tree[ei]) chords.push_back(ei);

  // Tree flows: accumulate from the leaves up; the component root absorbs
  // any residual (zero when the attack balances).
  std::vector<double> flow(ne, 0.0);
  auto tree_flows = [&](const std::vector<double>& node_demand, std::vector<double>& f) {
    std::vector<double> acc(node_demand);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto v = static_cast<std::size_t>(*it);
      const int pe = parent_edge[v];
      if (pe < 0) continue;
      const auto& e = graph.edges[static_cast<std::size_t>(pe)];
      // Flow oriented from -> to delivers into `to`.
      if (e.to == v) {
        f[static_cast<std::size_t>(pe)] += acc[v];
        acc[e.from] += acc[v];
      } else {
        f[static_cast<std::size_t>(pe)] -= acc[v];
        acc[e.to] += acc[v];
      }
    }
  };
  tree_flows(demand, flow);

  // Cycle basis columns over all edges, one per chord.
  const std::size_t nq = chords.size();
  std::vector<std::vector<double>> cycle(nq, std::vector<double>(ne, 0.0));
  if (nq > 0) {
    for (std::size_t c = 0; c < nq; ++c) {
      // Unit circulation on the chord: push 1 along the chord and return
      // through the tree (demand +1 at from, -1 at to).
      const auto& e = graph.edges[chords[c]];
      std::vector<double> circ_demand(n, 0.0);
      circ_demand[e.to] -= 1.0;
      circ_demand[e.from] += 1.0;
      std::vector<double> f(ne, 0.0);
      tree_flows(circ_demand, f);
      f[chords[c]] = 1.0;
      // A unit flow entering `to` must leave the tree carrying it back:
      // recompute with the chord carrying one unit from->to.
      // tree carries the complementary return path.
      for (std::size_t ei = 0; ei < ne; ++ei) cycle[c][ei] = f[ei];
    }
  }

  // Passive-subgraph cycle basis for the Weymouth consistency residuals.
  std::vector<std::vector<double>> passive_cycles;
  {
    std::vector<int> comp(n, -1);
    std::vector<int> pparent(n, -1);
    std::vector<int> porder;
    int ncomp = 0;
    for (std::size_t root = 0; root < n; ++root) {
      if (comp[root] >= 0) continue;
      comp[root] = ncomp;
      std::vector<std::size_t> queue{root};
      porder.push_back(static_cast<int>(root));
      for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const auto v = queue[qi];
        for (const auto& [ei, dir] : graph.adj[v]) {
          if (!graph.edges[ei].passive) continue;
          const auto& e = graph.edges[ei];
          const auto w = dir > 0 ? e.to : e.from;
          if (comp[w] >= 0) continue;
          comp[w] = ncomp;
          pparent[w] = static_cast<int>(ei);
          porder.push_back(static_cast<int>(w));
          queue.push_back(w);
        }
      }
      ++ncomp;
    }
    std::vector<bool> used(ne, false);
    for (std::size_t v = 0; v < n; ++v)
      if (pparent[v] >= 0) used[static_cast<std::size_t>(pparent[v])] = true;
    for (std::size_t ei = 0; ei < ne; ++ei) {
      const auto& e = graph.edges[ei];
      if (!e.passive || used[ei]) continue;
      if (comp[e.from] != comp[e.to]) continue; // cannot happen, both passive-reached
      // Chord of the passive forest: the cycle is the chord plus the forest
      // path closing it. Signs telescope the oriented pressure drops.
      std::vector<double> cyc(ne, 0.0);
      cyc[ei] = 1.0;
      std::vector<double> up_to(ne, 0.0), up_from(ne, 0.0);
      std::size_t v = e.to;
      while (pparent[v] >= 0) {
        const auto pe = static_cast<std::size_t>(pparent[v]);
        const auto& pedge = graph.edges[pe];
        up_to[pe] += (pedge.to == v) ? 1.0 : -1.0;
        v = (pedge.to == v) ? pedge.from : pedge.to;
      }
      v = e.from;
      while (pparent[v] >= 0) {
        const auto pe = static_cast<std::size_t>(pparent[v]);
        const auto& pedge = graph.edges[pe];
        up_from[pe] += (pedge.to == v) ? 1.0 : -1.0;
        v = (pedge.to == v) ? pedge.from : pedge.to;
      }
      // Cycle: chord(from->to) then tree path to->...->from, i.e. the path
      // that RETURNS flow: subtract the to-path and add the from-path.
      for (std::size_t k = 0; k < ne; ++k) cyc[k] += up_from[k] - up_to[k];
      passive_cycles.push_back(std::move(cyc));
    }
  }

  // Newton correction on the chord circulations when the mesh couples
  // Weymouth residuals; minimum-norm start and minimum-norm steps.
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nq));
  if (nq > 0) {
    Eigen::MatrixXd C(static_cast<Eigen::Index>(ne), static_cast<Eigen::Index>(nq));
    for (std::size_t c = 0; c < nq; ++c)
      for (std::size_t ei = 0; ei < ne; ++ei)
        C(static_cast<Eigen::Index>(ei), static_cast<Eigen::Index>(c)) = cycle[c][ei];
    Eigen::VectorXd g0(static_cast<Eigen::Index>(ne));
    for (std::size_t ei = 0; ei < ne; ++ei) g0(static_cast<Eigen::Index>(ei)) = flow[ei];
    // Min-norm start: q = argmin ||g0 + C q||.
    q = C.colPivHouseholderQr().solve(-g0);

    const std::size_t nr = passive_cycles.size();
    auto edge_flow = [&](const Eigen::VectorXd& qq, std::size_t ei) {
      double f = flow[ei];
      for (std::size_t c = 0; c < nq; ++c)
        f += cycle[c][ei] * qq(static_cast<Eigen::Index>(c));
      return f;
    };
    if (nr > 0) {
      const int cap = 100;
      const double tol = 1e-10;
      int it = 0;
      for (; it < cap; ++it) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(nr));
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nr),
                                                  static_cast<Eigen::Index>(nq));
        for (std::size_t pc = 0; pc < nr; ++pc) {
          double res = 0.0;
          for (std::size_t ei = 0; ei < ne; ++ei) {
            const double coef = passive_cycles[pc][ei];
            if (coef == 0.0) continue;
            const auto& e = graph.edges[ei];
            const double h = e.baseline + edge_flow(q, ei);
            res += coef * (signed_square(h) - signed_square(e.baseline)) / e.weymouth;
            const double deriv = 2.0 * std::abs(h) / e.weymouth;
            for (std::size_t c = 0; c < nq; ++c)
              J(static_cast<Eigen::Index>(pc), static_cast<Eigen::Index>(c)) +=
                  coef * deriv * cycle[c][ei];
          }
          r(static_cast<Eigen::Index>(pc)) = res;
        }
        out.residual = r.cwiseAbs().maxCoeff();
        if (out.residual <= tol) break;
        Eigen::VectorXd step =
            J.completeOrthogonalDecomposition().solve(r); // min-norm Gauss-Newton step
        double damp = 1.0;
        // Backtrack on the residual norm.
        const double base_norm = r.norm();
        for (int bt = 0; bt < 30; ++bt) {
          Eigen::VectorXd qt = q - damp * step;
          double nn = 0.0;
          for (std::size_t pc = 0; pc < nr; ++pc) {
            double res = 0.0;
            for (std::size_t ei = 0; ei < ne; ++ei) {
              const double coef = passive_cycles[pc][ei];
              if (coef == 0.0) continue;
              const auto& e = graph.edges[ei];
              const double h = e.baseline + edge_flow(qt, ei);
              res += coef * (signed_square(h) - signed_square(e.baseline)) / e.weymouth;
            }
            nn += res * res;
          }
          if (std::sqrt(nn) < base_norm || damp < 1e-6) {
            q = qt;
            break;
          }
          damp *= 0.5;
        }
      }
      out.newton_iterations = it;
      if (out.residual > 1e-8)
        throw SolveError("gas delta consistency solve did not converge; residual " +
                         std::to_string(out.residual));
    }
    for (std::size_t ei = 0; ei < ne; ++ei) flow[ei] = edge_flow(q, ei);
  }

  for (std::size_t ei = 0; ei < ne; ++ei) {
    const auto& e = graph.edges[ei];
    if (e.passive)
      out.dg_pipeline[e.index] = flow[ei];
    else
      out.dg_compressor[e.index] = flow[ei];
  }

  // Pressure deltas by propagation over passive edges; the first node of
  // each passive component is the reference with dpi = 0.
  {
    std::vector<bool> seen_p(n, false);
    for (std::size_t root = 0; root < n; ++root) {
      if (seen_p[root]) continue;
      seen_p[root] = true;
      out.dpi_node[root] = 0.0;
      std::vector<std::size_t> queue{root};
      for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const auto v = queue[qi];
        for (const auto& [ei, dir] : graph.adj[v]) {
          const auto& e = graph.edges[ei];
          if (!e.passive) continue;
          const auto w = dir > 0 ? e.to : e.from;
          if (seen_p[w]) continue;
          seen_p[w] = true;
          const double h = e.baseline + flow[ei];
          const double drop = (signed_square(h) - signed_square(e.baseline)) / e.weymouth;
          // (3e): dpi_m - dpi_n = drop along m->n.
          out.dpi_node[w] = dir > 0 ? out.dpi_node[v] - drop : out.dpi_node[v] + drop;
          queue.push_back(w);
        }
      }
    }
  }
  return out;
}

FalsifiedMeasurements derive_falsified(const AttackVector& x, const PtdfMatrix& ptdf,
                                       const IEGSInstance& inst) {
  FalsifiedMeasurements f;
  f.dp_line = derive_power_flow_deltas(x, ptdf, inst.power);
  auto gd = derive_gas_deltas(x, inst);
  f.dg_pipeline = std::move(gd.dg_pipeline);
  f.dg_compressor = std::move(gd.dg_compressor);
  f.dpi_node = std::move(gd.dpi_node);
  return f;
}

namespace {

// Shared auxiliary layer for the upper-level extensions: measurement-delta
// columns defined by (1c), (3d) and PWL-(3e).
struct MeasurementAux {
  std::vector<int> dp_line;
  std::vector<int> dg_pipe;
  std::vector<int> dg_comp;
  std::vector<int> dpi;
};

MeasurementAux append_measurement_aux(LinearBlock& b, const IEGSInstance& inst,
                                      const PtdfMatrix& ptdf) {
  MeasurementAux aux;
  const auto np = inst.power.loads.size();
  auto add_var = [&](const std::string& name, VarKind kind, double lo, double hi) {
    b.vars.push_back({name, kind, lo, hi});
    return static_cast<int>(b.vars.size()) - 1;
  };

  // (1c): dp_line - sum_d beta_{l,node(d)} * (-dp_d) = 0.
  for (std::size_t l = 0; l < inst.power.lines.size(); ++l) {
    const int v = add_var("dpl[" + inst.power.lines[l].id + "]", VarKind::Continuous, -kInf, kInf);
    aux.dp_line.push_back(v);
    std::vector<std::pair<int, double>> coeffs{{v, 1.0}};
    for (std::size_t d = 0; d < np; ++d) {
      const double beta = ptdf.beta[l][power_node_index(inst.power, inst.power.loads[d].node)];
      if (beta != 0.0) coeffs.push_back({static_cast<int>(d), beta});
    }
    b.rows.push_back({"def-dpl[" + inst.power.lines[l].id + "]", Sense::EQ, 0.0, coeffs});
  }

  for (const auto& p : inst.gas.pipelines)
    aux.dg_pipe.push_back(
        add_var("dgl[" + p.id + "]", VarKind::Continuous, -kInf, kInf));
  for (const auto& c : inst.gas.compressors)
    aux.dg_comp.push_back(add_var("dgc[" + c.id + "]", VarKind::Continuous, -kInf, kInf));
  for (const auto& nd : inst.gas.nodes)
    aux.dpi.push_back(add_var("dpi[" + nd.id + "]", VarKind::Continuous, -kInf, kInf));

  // (3d) nodal balance of measurement deltas.
  for (std::size_t ni = 0; ni < inst.gas.nodes.size(); ++ni) {
    std::vector<std::pair<int, double>> coeffs;
    for (std::size_t d = 0; d < inst.gas.loads.size(); ++d)
      if (gas_node_index(inst.gas, inst.gas.loads[d].node) == ni)
        coeffs.push_back({static_cast<int>(np + d), 1.0});
    for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l) {
      const auto& p = inst.gas.pipelines[l];
      if (gas_node_index(inst.gas, p.to) == ni) coeffs.push_back({aux.dg_pipe[l], -1.0});
      if (gas_node_index(inst.gas, p.from) == ni) coeffs.push_back({aux.dg_pipe[l], 1.0});
    }
    for (std::size_t c = 0; c < inst.gas.compressors.size(); ++c) {
      const auto& cc = inst.gas.compressors[c];
      if (gas_node_index(inst.gas, cc.to) == ni) coeffs.push_back({aux.dg_comp[c], -1.0});
      if (gas_node_index(inst.gas, cc.from) == ni) coeffs.push_back({aux.dg_comp[c], 1.0});
    }
    if (coeffs.empty()) continue;
    b.rows.push_back({"3d[" + inst.gas.nodes[ni].id + "]", Sense::EQ, 0.0, coeffs});
  }

  // PWL-(3e) per passive pipeline over h = baseline + dg.
  for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l) {
    const auto& p = inst.gas.pipelines[l];
    if (!p.baseline_flow)
      throw SolveError("pipeline '" + p.id + "' lacks a baseline flow measurement");
    const auto scheme = pwl::build_scheme(p.limit, inst.pwl_segments);
    const double fhat_base = scheme.value_at(*p.baseline_flow);
    std::vector<int> t;
    for (int k = 0; k < scheme.segments; ++k)
      t.push_back(add_var("t3e[" + p.id + "][" + std::to_string(k) + "]", VarKind::Continuous,
                          0.0, scheme.widths[static_cast<std::size_t>(k)]));
    std::vector<int> sig;
    for (int k = 0; k + 1 < scheme.segments; ++k)
      sig.push_back(add_var("sig3e[" + p.id + "][" + std::to_string(k) + "]", VarKind::Binary,
                            0.0, 1.0));
    // h = X0 + sum t
    std::vector<std::pair<int, double>> gdef{{aux.dg_pipe[l], 1.0}};
    for (int tk : t) gdef.push_back({tk, -1.0});
    b.rows.push_back({"3e-g[" + p.id + "]", Sense::EQ,
                      scheme.breakpoints.front() - *p.baseline_flow, gdef});
    // fhat(h) - fhat(baseline) = W (dpi_m - dpi_n)
    std::vector<std::pair<int, double>> vdef;
    for (int k = 0; k < scheme.segments; ++k)
      vdef.push_back({t[static_cast<std::size_t>(k)], scheme.slopes[static_cast<std::size_t>(k)]});
    vdef.push_back({aux.dpi[gas_node_index(inst.gas, p.from)], -p.weymouth});
    vdef.push_back({aux.dpi[gas_node_index(inst.gas, p.to)], p.weymouth});
    const double f_x0 = scheme.breakpoints.front() * std::abs(scheme.breakpoints.front());
    b.rows.push_back({"3e-w[" + p.id + "]", Sense::EQ, fhat_base - f_x0, vdef});
    // Incremental ordering.
    for (int k = 0; k + 1 < scheme.segments; ++k) {
      b.rows.push_back({"3e-ord-a[" + p.id + "][" + std::to_string(k) + "]", Sense::LE, 0.0,
                        {{t[static_cast<std::size_t>(k) + 1], 1.0},
                         {sig[static_cast<std::size_t>(k)],
                          -scheme.widths[static_cast<std::size_t>(k) + 1]}}});
      b.rows.push_back({"3e-ord-b[" + p.id + "][" + std::to_string(k) + "]", Sense::LE, 0.0,
                        {{sig[static_cast<std::size_t>(k)],
                          scheme.widths[static_cast<std::size_t>(k)]},
                         {t[static_cast<std::size_t>(k)], -1.0}}});
    }
  }
  return aux;
}

} // namespace

LinearBlock extension_violation_block(const IEGSInstance& inst,
                                      const DispatchEstimates& est) {
  if (est.p_gen.size() != inst.power.generators.size() ||
      est.shed_power.size() != inst.power.loads.size() ||
      est.g_pipeline.size() != inst.gas.pipelines.size() ||
      est.g_compressor.size() != inst.gas.compressors.size() ||
      est.pi_node.size() != inst.gas.nodes.size())
    throw DimensionError("dispatch estimates do not match the instance dimensions");

  LinearBlock b = attack_region(inst);
  const auto ptdf = build_ptdf(inst.power);
  const auto aux = append_measurement_aux(b, inst, ptdf);
  const auto np = inst.power.loads.size();

  // (8a): estimated line flows stay inside limits under the falsified loads.
  for (std::size_t l = 0; l < inst.power.lines.size(); ++l) {
    double base = 0.0;
    for (std::size_t g = 0; g < inst.power.generators.size(); ++g)
      base += ptdf.beta[l][power_node_index(inst.power, inst.power.generators[g].node)] *
              est.p_gen[g];
    std::vector<std::pair<int, double>> coeffs;
    for (std::size_t d = 0; d < np; ++d) {
      const double beta = ptdf.beta[l][power_node_index(inst.power, inst.power.loads[d].node)];
      base -= beta * (inst.power.loads[d].demand - est.shed_power[d]);
      if (beta != 0.0) coeffs.push_back({static_cast<int>(d), -beta});
    }
    const double lim = inst.power.lines[l].limit;
    auto neg = coeffs;
    for (auto& [c, v] : neg) v = -v;
    b.rows.push_back({"8a+[" + inst.power.lines[l].id + "]", Sense::LE, lim - base, coeffs});
    b.rows.push_back({"8a-[" + inst.power.lines[l].id + "]", Sense::LE, lim + base, neg});
  }
  // (8b): pressure bounds on estimated + delta.
  for (std::size_t ni = 0; ni < inst.gas.nodes.size(); ++ni) {
    const auto& nd = inst.gas.nodes[ni];
    b.rows.push_back({"8b+[" + nd.id + "]", Sense::LE, nd.pressure_max - est.pi_node[ni],
                      {{aux.dpi[ni], 1.0}}});
    b.rows.push_back({"8b-[" + nd.id + "]", Sense::LE, est.pi_node[ni] - nd.pressure_min,
                      {{aux.dpi[ni], -1.0}}});
  }
  // (8c): compressor ratio on falsified pressures.
  for (std::size_t c = 0; c < inst.gas.compressors.size(); ++c) {
    const auto& cc = inst.gas.compressors[c];
    const auto mi = gas_node_index(inst.gas, cc.from);
    const auto ni = gas_node_index(inst.gas, cc.to);
    b.rows.push_back({"8c[" + cc.id + "]", Sense::LE,
                      cc.ratio * est.pi_node[mi] - est.pi_node[ni],
                      {{aux.dpi[ni], 1.0}, {aux.dpi[mi], -cc.ratio}}});
  }
  // (8d): passive flow limits on falsified flows.
  for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l) {
    const auto& p = inst.gas.pipelines[l];
    b.rows.push_back({"8d+[" + p.id + "]", Sense::LE, p.limit - est.g_pipeline[l],
                      {{aux.dg_pipe[l], 1.0}}});
    b.rows.push_back({"8d-[" + p.id + "]", Sense::LE, p.limit + est.g_pipeline[l],
                      {{aux.dg_pipe[l], -1.0}}});
  }
  // (8e): active flow limits.
  for (std::size_t c = 0; c < inst.gas.compressors.size(); ++c) {
    const auto& cc = inst.gas.compressors[c];
    b.rows.push_back({"8e+[" + cc.id + "]", Sense::LE, cc.limit - est.g_compressor[c],
                      {{aux.dg_comp[c], 1.0}}});
    b.rows.push_back({"8e-[" + cc.id + "]", Sense::LE, est.g_compressor[c],
                      {{aux.dg_comp[c], -1.0}}});
  }
  return b;
}

LinearBlock budget_block(const IEGSInstance& inst, double budget) {
  if (budget < 0) throw DimensionError("budget must be >= 0");
  LinearBlock b = attack_region(inst);
  const auto ptdf = build_ptdf(inst.power);
  const auto aux = append_measurement_aux(b, inst, ptdf);
  const auto np = inst.power.loads.size();

  auto add_bin = [&](const std::string& name) {
    b.vars.push_back({name, VarKind::Binary, 0.0, 1.0});
    return static_cast<int>(b.vars.size()) - 1;
  };
  // Forward indicator only: |delta| <= M * flag. A flag raised on a zero
  // delta just wastes budget, so the reverse side never changes the optimum.
  auto indicator = [&](int var, double big_m, const std::string& name) {
    const int flag = add_bin("delta[" + name + "]");
    b.rows.push_back({"b+[" + name + "]", Sense::LE, 0.0, {{var, 1.0}, {flag, -big_m}}});
    b.rows.push_back({"b-[" + name + "]", Sense::LE, 0.0, {{var, -1.0}, {flag, -big_m}}});
    return flag;
  };

  std::vector<std::pair<int, double>> cardinality;
  double dg_mass = 0.0;
  for (std::size_t d = 0; d < inst.gas.loads.size(); ++d)
    dg_mass += inst.tau_g * inst.gas.loads[d].demand;

  for (std::size_t d = 0; d < np; ++d) {
    const double w = std::max(inst.tau_p * inst.power.loads[d].demand, 1e-9);
    cardinality.push_back(
        {indicator(static_cast<int>(d), w, "dp." + inst.power.loads[d].id), 1.0});
  }
  for (std::size_t l = 0; l < inst.power.lines.size(); ++l) {
    double w = 1e-9;
    for (std::size_t d = 0; d < np; ++d)
      w += std::abs(ptdf.beta[l][power_node_index(inst.power, inst.power.loads[d].node)]) *
           inst.tau_p * inst.power.loads[d].demand;
    // Line measurement deltas count twice in (9g).
    cardinality.push_back({indicator(aux.dp_line[l], w, "dpl." + inst.power.lines[l].id), 2.0});
  }
  for (std::size_t d = 0; d < inst.gas.loads.size(); ++d) {
    const double w = std::max(inst.tau_g * inst.gas.loads[d].demand, 1e-9);
    cardinality.push_back({indicator(static_cast<int>(np + d), w,
                                     "dg." + inst.gas.loads[d].id),
                           1.0});
  }
  for (std::size_t ni = 0; ni < inst.gas.nodes.size(); ++ni) {
    double w = 1e-9;
    for (const auto& p : inst.gas.pipelines) w += 2.0 * p.limit * p.limit / p.weymouth;
    cardinality.push_back({indicator(aux.dpi[ni], w, "dpi." + inst.gas.nodes[ni].id), 1.0});
  }
  for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l)
    cardinality.push_back({indicator(aux.dg_pipe[l], std::max(dg_mass, 1e-9),
                                     "dgl." + inst.gas.pipelines[l].id),
                           1.0});
  for (std::size_t c = 0; c < inst.gas.compressors.size(); ++c)
    cardinality.push_back({indicator(aux.dg_comp[c], std::max(dg_mass, 1e-9),
                                     "dgc." + inst.gas.compressors[c].id),
                           1.0});

  b.rows.push_back({"9g", Sense::LE, budget, cardinality});
  return b;
}

LinearBlock merge_blocks(const LinearBlock& base, const LinearBlock& extra) {
  if (base.core_dim != extra.core_dim) throw DimensionError("blocks disagree on core dimension");
  LinearBlock out = base;
  const int offset = static_cast<int>(base.vars.size()) - static_cast<int>(extra.core_dim);
  for (std::size_t j = extra.core_dim; j < extra.vars.size(); ++j) {
    auto v = extra.vars[j];
    v.name = "m." + v.name;
    out.vars.push_back(v);
  }
  for (auto row : extra.rows) {
    for (auto& [col, val] : row.coeffs)
      if (col >= static_cast<int>(extra.core_dim)) col += offset;
    row.name = "m." + row.name;
    out.rows.push_back(std::move(row));
  }
  return out;
}

LinearBlock build_upper_region(const IEGSInstance& inst,
                               const std::optional<DispatchEstimates>& estimates,
                               const std::optional<double>& budget) {
  if (estimates && budget) {
    // Both toggles: the budget block carries its own measurement-aux copy.
    // The duplicate consistency rows describe the same projected region, so
    // correctness is unaffected; desk-scale instances tolerate the extra
    // columns.
    return merge_blocks(extension_violation_block(inst, *estimates),
                        budget_block(inst, *budget));
  }
  if (estimates) return extension_violation_block(inst, *estimates);
  if (budget) return budget_block(inst, *budget);
  return attack_region(inst);
}

} // namespace iegs
