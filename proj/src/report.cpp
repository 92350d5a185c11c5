#include "iegs/report.hpp"

#include <cstdio>
#include <ostream>

#include <json.hpp>

namespace iegs::report {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_iterations_csv(std::ostream& os, const rd::RDState& state, bool with_timing) {
  os << "k,upper_bound,lower_bound,z_star,gamma_f,classification,wall_seconds\n";
  for (const auto& rec : state.log) {
    os << rec.k << "," << fmt(rec.upper_bound) << "," << fmt(rec.lower_bound) << ","
       << rec.z_bits << "," << fmt(rec.gamma_f) << "," << rec.classification << ","
       << fmt(with_timing ? rec.wall_seconds : 0.0) << "\n";
  }
}

void write_attack_csv(std::ostream& os, const IEGSInstance& inst, const AttackVector& x,
                      const FalsifiedMeasurements& f) {
  os << "kind,id,delta\n";
  for (std::size_t d = 0; d < inst.power.loads.size(); ++d)
    os << "power_load," << inst.power.loads[d].id << "," << fmt(x.dp[d]) << "\n";
  for (std::size_t d = 0; d < inst.gas.loads.size(); ++d)
    os << "gas_load," << inst.gas.loads[d].id << "," << fmt(x.dg[d]) << "\n";
  for (std::size_t l = 0; l < inst.power.lines.size(); ++l)
    os << "power_flow," << inst.power.lines[l].id << "," << fmt(f.dp_line[l]) << "\n";
  for (std::size_t l = 0; l < inst.gas.pipelines.size(); ++l)
    os << "gas_flow_passive," << inst.gas.pipelines[l].id << "," << fmt(f.dg_pipeline[l])
       << "\n";
  for (std::size_t c = 0; c < inst.gas.compressors.size(); ++c)
    os << "gas_flow_active," << inst.gas.compressors[c].id << "," << fmt(f.dg_compressor[c])
       << "\n";
  for (std::size_t n = 0; n < inst.gas.nodes.size(); ++n)
    os << "gas_pressure," << inst.gas.nodes[n].id << "," << fmt(f.dpi_node[n]) << "\n";
}

void write_dispatch_csv(std::ostream& os, const IEGSInstance& inst,
                        const oracle::DispatchResult& d) {
  os << "quantity,id,value\n";
  for (std::size_t g = 0; g < inst.power.generators.size(); ++g) {
    os << "commitment," << inst.power.generators[g].id << "," << d.commitment[g] << "\n";
    os << "generation," << inst.power.generators[g].id << "," << fmt(d.p_gen[g]) << "\n";
  }
  for (std::size_t i = 0; i < inst.power.loads.size(); ++i)
    os << "power_shed," << inst.power.loads[i].id << "," << fmt(d.shed_power[i]) << "\n";
  for (std::size_t i = 0; i < inst.power.lines.size(); ++i)
    os << "line_flow," << inst.power.lines[i].id << "," << fmt(d.line_flow[i]) << "\n";
  for (std::size_t i = 0; i < inst.gas.wells.size(); ++i)
    os << "well_output," << inst.gas.wells[i].id << "," << fmt(d.g_well[i]) << "\n";
  for (std::size_t i = 0; i < inst.gas.pipelines.size(); ++i)
    os << "pipeline_flow," << inst.gas.pipelines[i].id << "," << fmt(d.g_pipeline[i]) << "\n";
  for (std::size_t i = 0; i < inst.gas.compressors.size(); ++i)
    os << "compressor_flow," << inst.gas.compressors[i].id << "," << fmt(d.g_compressor[i])
       << "\n";
  for (std::size_t i = 0; i < inst.gas.nodes.size(); ++i)
    os << "pressure," << inst.gas.nodes[i].id << "," << fmt(d.pi_node[i]) << "\n";
  for (std::size_t i = 0; i < inst.gas.loads.size(); ++i)
    os << "gas_shed," << inst.gas.loads[i].id << "," << fmt(d.shed_gas[i]) << "\n";
  for (std::size_t i = 0; i < inst.p2g.size(); ++i)
    os << "p2g_draw," << inst.p2g[i].id << "," << fmt(d.p2g_draw[i]) << "\n";
  os << "cost,total," << fmt(d.cost) << "\n";
}

void write_compare_csv(std::ostream& os, const IEGSInstance& inst,
                       const std::vector<CompareRow>& rows, bool with_timing) {
  os << "method,objective,iterations,wall_seconds";
  for (const auto& d : inst.power.loads) os << ",dp[" << d.id << "]";
  for (const auto& d : inst.gas.loads) os << ",dg[" << d.id << "]";
  os << "\n";
  for (const auto& r : rows) {
    os << r.method << "," << fmt(r.objective) << "," << r.iterations << ","
       << fmt(with_timing ? r.wall_seconds : 0.0);
    for (double v : r.attack.dp) os << "," << fmt(v);
    for (double v : r.attack.dg) os << "," << fmt(v);
    os << "\n";
  }
}

void write_classification_csv(std::ostream& os, const oracle::ZClassification& classes,
                              const std::vector<std::string>& z_names) {
  os << "z";
  for (const auto& zn : z_names) os << "," << zn;
  os << ",classification,gamma_f,witness\n";
  for (std::size_t i = 0; i < classes.z_bits.size(); ++i) {
    std::string bits;
    for (double b : classes.z_bits[i]) bits += b > 0.5 ? '1' : '0';
    os << bits;
    for (double b : classes.z_bits[i]) os << "," << (b > 0.5 ? 1 : 0);
    os << "," << (classes.mu_feasible[i] ? "mu" : "nu") << "," << fmt(classes.gamma_f[i]) << ",";
    if (classes.witness[i]) {
      std::string w;
      for (double v : classes.witness[i]->dp) w += (w.empty() ? "" : ";") + fmt(v);
      for (double v : classes.witness[i]->dg) w += (w.empty() ? "" : ";") + fmt(v);
      os << w;
    }
    os << "\n";
  }
}

void write_oracle_trace_csv(std::ostream& os, const IEGSInstance& inst,
                            const oracle::BruteForceResult& result) {
  os << "point";
  for (const auto& d : inst.power.loads) os << ",dp[" << d.id << "]";
  for (const auto& d : inst.gas.loads) os << ",dg[" << d.id << "]";
  os << ",value\n";
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    os << i;
    for (double v : result.trace[i].x.dp) os << "," << fmt(v);
    for (double v : result.trace[i].x.dg) os << "," << fmt(v);
    os << "," << fmt(result.trace[i].value) << "\n";
  }
}

void write_pwl_report_csv(std::ostream& os, const pwl::PwlScheme& scheme) {
  os << "segment,left,right,slope,max_error\n";
  for (const auto& row : pwl::segment_table(scheme))
    os << row.segment << "," << fmt(row.left) << "," << fmt(row.right) << "," << fmt(row.slope)
       << "," << fmt(row.max_error) << "\n";
}

std::string report_json(const IEGSInstance& inst, const rd::SolveReport& rep,
                        const FalsifiedMeasurements& f, const std::vector<std::string>& y_names,
                        const std::vector<std::string>& z_names, bool with_timing) {
  json j;
  j["meta"]["instance"] = inst.name;
  j["meta"]["tool"] = "iegs";
  if (with_timing) j["meta"]["wall_seconds"] = rep.wall_seconds;
  const char* status = "converged";
  switch (rep.status) {
    case rd::RDStatus::Converged: status = "converged"; break;
    case rd::RDStatus::IterationLimit: status = "iteration-limit"; break;
    case rd::RDStatus::MasterInfeasible: status = "master-infeasible"; break;
    case rd::RDStatus::Stalled: status = "stalled"; break;
  }
  j["result"]["status"] = status;
  j["result"]["objective"] = rep.objective;
  j["result"]["bounds"] = {{"lower", rep.state.lower_bound},
                           {"upper", rep.state.upper_bound}};
  json attack = json::array();
  for (std::size_t d = 0; d < inst.power.loads.size(); ++d)
    attack.push_back({{"kind", "power_load"},
                      {"id", inst.power.loads[d].id},
                      {"delta", rep.attack.dp[d]}});
  for (std::size_t d = 0; d < inst.gas.loads.size(); ++d)
    attack.push_back(
        {{"kind", "gas_load"}, {"id", inst.gas.loads[d].id}, {"delta", rep.attack.dg[d]}});
  j["result"]["attack"] = attack;
  json zj = json::object();
  for (std::size_t k = 0; k < z_names.size() && k < rep.commitment_z.size(); ++k)
    zj[z_names[k]] = rep.commitment_z[k] > 0.5 ? 1 : 0;
  j["result"]["commitment"] = zj;
  json yj = json::object();
  for (std::size_t k = 0; k < y_names.size() && k < rep.operator_y.size(); ++k)
    yj[y_names[k]] = rep.operator_y[k];
  j["result"]["dispatch"] = yj;
  json iters = json::array();
  for (const auto& rec : rep.state.log)
    iters.push_back({{"k", rec.k},
                     {"upper_bound", rec.upper_bound},
                     {"lower_bound", rec.lower_bound},
                     {"z", rec.z_bits},
                     {"gamma_f", rec.gamma_f},
                     {"classification", rec.classification}});
  j["result"]["iterations"] = iters;
  j["result"]["classification_summary"] = {{"mu", rep.mu_found}, {"nu", rep.nu_found}};
  json fj;
  auto fill = [&](const char* key, const std::vector<double>& vals, auto id_of) {
    json arr = json::array();
    for (std::size_t i = 0; i < vals.size(); ++i)
      arr.push_back({{"id", id_of(i)}, {"delta", vals[i]}});
    fj[key] = arr;
  };
  fill("power_flow", f.dp_line, [&](std::size_t i) { return inst.power.lines[i].id; });
  fill("gas_flow_passive", f.dg_pipeline,
       [&](std::size_t i) { return inst.gas.pipelines[i].id; });
  fill("gas_flow_active", f.dg_compressor,
       [&](std::size_t i) { return inst.gas.compressors[i].id; });
  fill("gas_pressure", f.dpi_node, [&](std::size_t i) { return inst.gas.nodes[i].id; });
  j["result"]["falsified_measurements"] = fj;
  j["result"]["diagnostics"] = {{"rho_escalations", rep.diagnostics.rho_escalations},
                                {"rho_final", rep.diagnostics.rho_final},
                                {"big_m_doubled", rep.diagnostics.big_m_doubled},
                                {"marked_unsound", rep.diagnostics.marked_unsound},
                                {"notes", rep.diagnostics.notes}};
  return j.dump(2);
}

} // namespace iegs::report
