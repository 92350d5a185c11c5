#include "iegs/compact.hpp"

#include <algorithm>
#include <cmath>

#include "iegs/errors.hpp"
#include "iegs/instance.hpp"
#include "iegs/ptdf.hpp"

namespace iegs {

using milp::kInf;
using milp::Sense;
using milp::VarKind;

const char* row_tag_name(RowTag tag) {
  switch (tag) {
    case RowTag::UcOutput: return "uc-output";
    case RowTag::LineLimit: return "line-limit";
    case RowTag::PowerBalance: return "power-balance";
    case RowTag::PowerShed: return "power-shed";
    case RowTag::WellCapacity: return "well-capacity";
    case RowTag::PressureBound: return "pressure-bound";
    case RowTag::WeymouthPwl: return "weymouth-pwl";
    case RowTag::CompressorRatio: return "compressor-ratio";
    case RowTag::PipelineLimit: return "pipeline-limit";
    case RowTag::ActiveLimit: return "active-limit";
    case RowTag::GasBalance: return "gas-balance";
    case RowTag::GasShed: return "gas-shed";
    case RowTag::P2GCoupling: return "p2g-coupling";
  }
  return "?";
}

std::vector<double> CompactBilevel::rhs_minus_dx(const std::vector<double>& x_core) const {
  if (x_core.size() != core_dim) throw DimensionError("attack vector dimension mismatch");
  std::vector<double> b(lower.size());
  for (std::size_t i = 0; i < lower.size(); ++i) {
    double v = lower[i].rhs;
    for (const auto& [col, coef] : lower[i].on_x) v -= coef * x_core[static_cast<std::size_t>(col)];
    b[i] = v;
  }
  return b;
}

CompactBilevel assemble_compact(const IEGSInstance& inst, const LinearBlock& attack,
                                const AssembleOptions&) {
  {
    auto diags = validate(inst);
    if (!diags.empty()) throw ValidationError(std::move(diags));
  }
  CompactBilevel cb;
  cb.upper = attack;
  cb.core_dim = attack.core_dim;
  cb.core_power_dim = inst.power.loads.size();
  if (cb.core_dim != inst.power.loads.size() + inst.gas.loads.size())
    throw DimensionError("attack block core does not match the instance load sets");
  for (std::size_t j = 0; j < cb.core_dim; ++j) {
    cb.x_names.push_back(attack.vars[j].name);
    cb.x_index[attack.vars[j].name] = static_cast<int>(j);
  }
  // The base polytope is always the plain stealth region, whatever the
  // attack block carries on top of it.
  cb.base_rows = attack_region(inst).rows;

  const auto& ps = inst.power;
  const auto& gs = inst.gas;
  const auto ptdf = build_ptdf(ps);
  const auto np_loads = ps.loads.size();

  auto add_y = [&](const std::string& name, double cost, double lo, double hi) {
    cb.y_index[name] = static_cast<int>(cb.y_names.size());
    cb.y_names.push_back(name);
    cb.y_cost.push_back(cost);
    cb.y_lo.push_back(lo);
    cb.y_hi.push_back(hi);
    return static_cast<int>(cb.y_names.size()) - 1;
  };
  for (std::size_t d = 0; d < np_loads; ++d) {
    cb.x_lo.push_back(-inst.tau_p * ps.loads[d].demand);
    cb.x_hi.push_back(inst.tau_p * ps.loads[d].demand);
  }
  for (const auto& d : gs.loads) {
    cb.x_lo.push_back(-inst.tau_g * d.demand);
    cb.x_hi.push_back(inst.tau_g * d.demand);
  }
  auto add_z = [&](const std::string& name) {
    cb.z_index[name] = static_cast<int>(cb.z_names.size());
    cb.z_names.push_back(name);
    return static_cast<int>(cb.z_names.size()) - 1;
  };

  // y = col(p_G, s_D^P, g_W, g_L, g_C, pi_N, s_D^G, t blocks, p2g draws);
  // z = col(u_G, sigma blocks).
  std::vector<int> p_g, s_p, g_w, g_l, g_c, pi_n, s_g, p_f;
  for (const auto& g : ps.generators)
    p_g.push_back(add_y("p[" + g.id + "]", g.cost, 0.0, g.p_max));
  for (std::size_t d = 0; d < np_loads; ++d)
    s_p.push_back(add_y("sp[" + ps.loads[d].id + "]", ps.loads[d].shed_cost, 0.0,
                        ps.loads[d].demand * (1.0 + inst.tau_p)));
  for (const auto& w : gs.wells) g_w.push_back(add_y("gw[" + w.id + "]", w.cost, 0.0, w.capacity));
  for (const auto& p : gs.pipelines)
    g_l.push_back(add_y("gl[" + p.id + "]", 0.0, -p.limit, p.limit));
  for (const auto& c : gs.compressors)
    g_c.push_back(add_y("gc[" + c.id + "]", 0.0, 0.0, c.limit));
  for (const auto& n : gs.nodes)
    pi_n.push_back(add_y("pi[" + n.id + "]", 0.0, n.pressure_min, n.pressure_max));
  for (const auto& d : gs.loads)
    s_g.push_back(add_y("sg[" + d.id + "]", d.shed_cost, 0.0,
                        d.demand * (1.0 + inst.tau_g)));

  std::vector<pwl::PwlScheme> schemes;
  std::vector<std::vector<int>> t_vars(gs.pipelines.size());
  for (std::size_t l = 0; l < gs.pipelines.size(); ++l) {
    schemes.push_back(pwl::build_scheme(gs.pipelines[l].limit, inst.pwl_segments));
    for (int k = 0; k < schemes[l].segments; ++k)
      t_vars[l].push_back(
          add_y("t[" + gs.pipelines[l].id + "][" + std::to_string(k) + "]", 0.0, 0.0,
                schemes[l].widths[static_cast<std::size_t>(k)]));
  }
  for (const auto& f : inst.p2g) p_f.push_back(add_y("pf[" + f.id + "]", 0.0, 0.0, f.capacity));

  std::vector<int> u_g;
  for (const auto& g : ps.generators) u_g.push_back(add_z("u[" + g.id + "]"));
  std::vector<std::vector<int>> sig_vars(gs.pipelines.size());
  for (std::size_t l = 0; l < gs.pipelines.size(); ++l)
    for (int k = 0; k + 1 < schemes[l].segments; ++k)
      sig_vars[l].push_back(
          add_z("sigma[" + gs.pipelines[l].id + "][" + std::to_string(k) + "]"));

  using Coeffs = std::vector<std::pair<int, double>>;
  auto row = [&](const std::string& name, RowTag tag, Coeffs on_x, Coeffs on_y, Coeffs on_z,
                 double rhs) {
    cb.lower.push_back({name, tag, std::move(on_x), std::move(on_y), std::move(on_z), rhs});
  };
  auto eq_pair = [&](const std::string& name, RowTag tag, const Coeffs& on_x, const Coeffs& on_y,
                     const Coeffs& on_z, double rhs) {
    row(name + "+", tag, on_x, on_y, on_z, rhs);
    Coeffs nx = on_x, ny = on_y, nz = on_z;
    for (auto& [c, v] : nx) v = -v;
    for (auto& [c, v] : ny) v = -v;
    for (auto& [c, v] : nz) v = -v;
    row(name + "-", tag, nx, ny, nz, -rhs);
  };

  // (4d) with UC coupling: P_min*u <= p <= P_max*u.
  for (std::size_t g = 0; g < ps.generators.size(); ++g) {
    const auto& gen = ps.generators[g];
    row("4d-ub[" + gen.id + "]", RowTag::UcOutput, {}, {{p_g[g], 1.0}},
        {{u_g[g], -gen.p_max}}, 0.0);
    row("4d-lb[" + gen.id + "]", RowTag::UcOutput, {}, {{p_g[g], -1.0}},
        {{u_g[g], gen.p_min}}, 0.0);
  }

  // (4e) line limits with the falsified loads.
  for (std::size_t l = 0; l < ps.lines.size(); ++l) {
    Coeffs on_y, on_x;
    double shift = 0.0; // sum_d beta_nd * P_d moved to the rhs
    for (std::size_t g = 0; g < ps.generators.size(); ++g) {
      const double beta = ptdf.beta[l][power_node_index(ps, ps.generators[g].node)];
      if (beta != 0.0) on_y.push_back({p_g[g], beta});
    }
    for (std::size_t f = 0; f < inst.p2g.size(); ++f) {
      const double beta = ptdf.beta[l][power_node_index(ps, inst.p2g[f].power_node)];
      if (beta != 0.0) on_y.push_back({p_f[f], -beta});
    }
    for (std::size_t d = 0; d < np_loads; ++d) {
      const double beta = ptdf.beta[l][power_node_index(ps, ps.loads[d].node)];
      if (beta == 0.0) continue;
      on_y.push_back({s_p[d], beta});
      on_x.push_back({static_cast<int>(d), -beta});
      shift += beta * ps.loads[d].demand;
    }
    Coeffs ny = on_y, nx = on_x;
    for (auto& [c, v] : ny) v = -v;
    for (auto& [c, v] : nx) v = -v;
    row("4e+[" + ps.lines[l].id + "]", RowTag::LineLimit, on_x, on_y, {},
        ps.lines[l].limit + shift);
    row("4e-[" + ps.lines[l].id + "]", RowTag::LineLimit, nx, ny, {},
        ps.lines[l].limit - shift);
  }

  // (4f) power balance; the attack terms cancel under (1a) and the paper
  // keeps them out of this row.
  {
    Coeffs on_y;
    double rhs = 0.0;
    for (std::size_t g = 0; g < ps.generators.size(); ++g) on_y.push_back({p_g[g], 1.0});
    for (std::size_t d = 0; d < np_loads; ++d) {
      on_y.push_back({s_p[d], 1.0});
      rhs += ps.loads[d].demand;
    }
    for (std::size_t f = 0; f < inst.p2g.size(); ++f) on_y.push_back({p_f[f], -1.0});
    eq_pair("4f", RowTag::PowerBalance, {}, on_y, {}, rhs);
  }

  // (4g) shed bounds with falsified loads.
  for (std::size_t d = 0; d < np_loads; ++d) {
    row("4g-lb[" + ps.loads[d].id + "]", RowTag::PowerShed, {}, {{s_p[d], -1.0}}, {}, 0.0);
    row("4g-ub[" + ps.loads[d].id + "]", RowTag::PowerShed,
        {{static_cast<int>(d), -1.0}}, {{s_p[d], 1.0}}, {}, ps.loads[d].demand);
  }

  // (4h) well capacity.
  for (std::size_t w = 0; w < gs.wells.size(); ++w) {
    row("4h-lb[" + gs.wells[w].id + "]", RowTag::WellCapacity, {}, {{g_w[w], -1.0}}, {}, 0.0);
    row("4h-ub[" + gs.wells[w].id + "]", RowTag::WellCapacity, {}, {{g_w[w], 1.0}}, {},
        gs.wells[w].capacity);
  }

  // (4i) squared-pressure bounds.
  for (std::size_t n = 0; n < gs.nodes.size(); ++n) {
    row("4i-ub[" + gs.nodes[n].id + "]", RowTag::PressureBound, {}, {{pi_n[n], 1.0}}, {},
        gs.nodes[n].pressure_max);
    row("4i-lb[" + gs.nodes[n].id + "]", RowTag::PressureBound, {}, {{pi_n[n], -1.0}}, {},
        -gs.nodes[n].pressure_min);
  }

  // Incremental PWL of the Weymouth relation, replacing (4j).
  for (std::size_t l = 0; l < gs.pipelines.size(); ++l) {
    const auto& p = gs.pipelines[l];
    const auto& sch = schemes[l];
    const double x0 = sch.breakpoints.front();
    Coeffs gdef{{g_l[l], 1.0}};
    for (int tk : t_vars[l]) gdef.push_back({tk, -1.0});
    eq_pair("4j-g[" + p.id + "]", RowTag::WeymouthPwl, {}, gdef, {}, x0);

    Coeffs wey;
    for (int k = 0; k < sch.segments; ++k)
      wey.push_back({t_vars[l][static_cast<std::size_t>(k)],
                     sch.slopes[static_cast<std::size_t>(k)]});
    wey.push_back({pi_n[gas_node_index(gs, p.from)], -p.weymouth});
    wey.push_back({pi_n[gas_node_index(gs, p.to)], p.weymouth});
    eq_pair("4j-w[" + p.id + "]", RowTag::WeymouthPwl, {}, wey, {}, -(x0 * std::abs(x0)));

    for (int k = 0; k < sch.segments; ++k) {
      const auto tk = t_vars[l][static_cast<std::size_t>(k)];
      row("4j-t-lb[" + p.id + "][" + std::to_string(k) + "]", RowTag::WeymouthPwl, {},
          {{tk, -1.0}}, {}, 0.0);
      row("4j-t-ub[" + p.id + "][" + std::to_string(k) + "]", RowTag::WeymouthPwl, {},
          {{tk, 1.0}}, {}, sch.widths[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k + 1 < sch.segments; ++k) {
      const auto sk = sig_vars[l][static_cast<std::size_t>(k)];
      row("4j-ord-a[" + p.id + "][" + std::to_string(k) + "]", RowTag::WeymouthPwl, {},
          {{t_vars[l][static_cast<std::size_t>(k) + 1], 1.0}},
          {{sk, -sch.widths[static_cast<std::size_t>(k) + 1]}}, 0.0);
      row("4j-ord-b[" + p.id + "][" + std::to_string(k) + "]", RowTag::WeymouthPwl, {},
          {{t_vars[l][static_cast<std::size_t>(k)], -1.0}},
          {{sk, sch.widths[static_cast<std::size_t>(k)]}}, 0.0);
    }
  }

  // (4k) simplified compressor model.
  for (std::size_t c = 0; c < gs.compressors.size(); ++c) {
    const auto& cc = gs.compressors[c];
    row("4k[" + cc.id + "]", RowTag::CompressorRatio, {},
        {{pi_n[gas_node_index(gs, cc.to)], 1.0},
         {pi_n[gas_node_index(gs, cc.from)], -cc.ratio}},
        {}, 0.0);
  }

  // (4l) passive pipeline limits.
  for (std::size_t l = 0; l < gs.pipelines.size(); ++l) {
    row("4l-ub[" + gs.pipelines[l].id + "]", RowTag::PipelineLimit, {}, {{g_l[l], 1.0}}, {},
        gs.pipelines[l].limit);
    row("4l-lb[" + gs.pipelines[l].id + "]", RowTag::PipelineLimit, {}, {{g_l[l], -1.0}}, {},
        gs.pipelines[l].limit);
  }

  // (4m) active pipeline limits.
  for (std::size_t c = 0; c < gs.compressors.size(); ++c) {
    row("4m-lb[" + gs.compressors[c].id + "]", RowTag::ActiveLimit, {}, {{g_c[c], -1.0}}, {},
        0.0);
    row("4m-ub[" + gs.compressors[c].id + "]", RowTag::ActiveLimit, {}, {{g_c[c], 1.0}}, {},
        gs.compressors[c].limit);
  }

  // (4n) gas balance with the falsified gas loads and fuel coupling.
  for (std::size_t n = 0; n < gs.nodes.size(); ++n) {
    Coeffs on_y, on_x;
    double rhs = 0.0;
    for (std::size_t w = 0; w < gs.wells.size(); ++w)
      if (gas_node_index(gs, gs.wells[w].node) == n) on_y.push_back({g_w[w], 1.0});
    for (std::size_t l = 0; l < gs.pipelines.size(); ++l) {
      if (gas_node_index(gs, gs.pipelines[l].to) == n) on_y.push_back({g_l[l], 1.0});
      if (gas_node_index(gs, gs.pipelines[l].from) == n) on_y.push_back({g_l[l], -1.0});
    }
    for (std::size_t c = 0; c < gs.compressors.size(); ++c) {
      if (gas_node_index(gs, gs.compressors[c].to) == n) on_y.push_back({g_c[c], 1.0});
      if (gas_node_index(gs, gs.compressors[c].from) == n) on_y.push_back({g_c[c], -1.0});
    }
    for (std::size_t d = 0; d < gs.loads.size(); ++d)
      if (gas_node_index(gs, gs.loads[d].node) == n) {
        on_y.push_back({s_g[d], 1.0});
        on_x.push_back({static_cast<int>(np_loads + d), -1.0});
        rhs += gs.loads[d].demand;
      }
    for (std::size_t g = 0; g < ps.generators.size(); ++g) {
      const auto& gen = ps.generators[g];
      if (gen.kind == FuelKind::GasFired && gas_node_index(gs, gen.gas_node) == n)
        on_y.push_back({p_g[g], -gen.gamma});
    }
    for (std::size_t f = 0; f < inst.p2g.size(); ++f)
      if (gas_node_index(gs, inst.p2g[f].gas_node) == n)
        on_y.push_back({p_f[f], inst.p2g[f].gamma});
    eq_pair("4n[" + gs.nodes[n].id + "]", RowTag::GasBalance, on_x, on_y, {}, rhs);
  }

  // (4o) gas shed bounds with falsified loads.
  for (std::size_t d = 0; d < gs.loads.size(); ++d) {
    row("4o-lb[" + gs.loads[d].id + "]", RowTag::GasShed, {}, {{s_g[d], -1.0}}, {}, 0.0);
    row("4o-ub[" + gs.loads[d].id + "]", RowTag::GasShed,
        {{static_cast<int>(np_loads + d), -1.0}}, {{s_g[d], 1.0}}, {}, gs.loads[d].demand);
  }

  // P2G draw bounds; production is already coupled through (4e)/(4f)/(4n).
  for (std::size_t f = 0; f < inst.p2g.size(); ++f) {
    row("p2g-lb[" + inst.p2g[f].id + "]", RowTag::P2GCoupling, {}, {{p_f[f], -1.0}}, {}, 0.0);
    row("p2g-ub[" + inst.p2g[f].id + "]", RowTag::P2GCoupling, {}, {{p_f[f], 1.0}}, {},
        inst.p2g[f].capacity);
  }

  return cb;
}

milp::Model lower_level_model(const CompactBilevel& cb, const std::vector<double>& x_core,
                              const std::vector<double>* z_fixed) {
  milp::Model m;
  m.obj_sense = milp::ObjSense::Min;
  for (std::size_t j = 0; j < cb.y_names.size(); ++j)
    m.add_continuous(cb.y_names[j], -kInf, kInf, cb.y_cost[j]);
  for (std::size_t j = 0; j < cb.z_names.size(); ++j) {
    if (z_fixed) {
      const double v = std::round((*z_fixed)[j]);
      m.add_continuous(cb.z_names[j], v, v);
    } else {
      m.add_binary(cb.z_names[j]);
    }
  }
  const auto b = cb.rhs_minus_dx(x_core);
  const int zoff = static_cast<int>(cb.y_names.size());
  for (std::size_t i = 0; i < cb.lower.size(); ++i) {
    const auto& r = cb.lower[i];
    std::vector<std::pair<int, double>> coeffs;
    for (const auto& [c, v] : r.on_y) coeffs.push_back({c, v});
    for (const auto& [c, v] : r.on_z) coeffs.push_back({c + zoff, v});
    m.add_row(r.name, Sense::LE, b[i], std::move(coeffs));
  }
  return m;
}

Sp2SizeComparison sp2_size_comparison(const CompactBilevel& cb) {
  const auto n = cb.dim_n();
  const auto q = cb.dim_q();
  const auto p = cb.dim_p();
  const auto m = cb.dim_m();
  Sp2SizeComparison s;
  s.model16_vars = m + n + p;
  s.model16_cons = 3 * m + n + 2 * p + q;
  s.kktm_vars = n + 2 * p + q;
  s.kktm_cons = m + 6 * p + q;
  s.var_difference = static_cast<long>(s.kktm_vars) - static_cast<long>(s.model16_vars);
  s.cons_difference = static_cast<long>(s.kktm_cons) - static_cast<long>(s.model16_cons);
  return s;
}

} // namespace iegs
