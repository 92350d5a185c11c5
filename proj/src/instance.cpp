#include "iegs/instance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iegs/errors.hpp"

namespace iegs {
namespace {

using nlohmann::json;

double num(const json& j, const std::string& field) {
  if (!j.contains(field)) throw ParseError("missing numeric field '" + field + "'");
  if (!j[field].is_number()) throw ParseError("field '" + field + "' must be a number");
  return j[field].get<double>();
}

double num_or(const json& j, const std::string& field, double fallback) {
  if (!j.contains(field)) return fallback;
  if (!j[field].is_number()) throw ParseError("field '" + field + "' must be a number");
  return j[field].get<double>();
}

std::string str(const json& j, const std::string& field) {
  if (!j.contains(field)) throw ParseError("missing string field '" + field + "'");
  if (!j[field].is_string()) throw ParseError("field '" + field + "' must be a string");
  return j[field].get<std::string>();
}

const json& arr(const json& j, const std::string& field) {
  static const json empty = json::array();
  if (!j.contains(field)) return empty;
  if (!j[field].is_array()) throw ParseError("field '" + field + "' must be an array");
  return j[field];
}

} // namespace

IEGSInstance load_instance(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("instance document must be a JSON object");

  IEGSInstance inst;
  inst.name = doc.value("name", "");

  if (!doc.contains("power")) throw ParseError("missing top-level key 'power'");
  const json& pw = doc["power"];
  for (const auto& n : arr(pw, "nodes")) {
    if (n.is_string())
      inst.power.nodes.push_back(n.get<std::string>());
    else
      inst.power.nodes.push_back(str(n, "id"));
  }
  for (const auto& l : arr(pw, "lines")) {
    PowerLine line;
    line.id = str(l, "id");
    line.from = str(l, "from");
    line.to = str(l, "to");
    line.reactance = num_or(l, "reactance", 0.0);
    line.limit = num(l, "limit");
    inst.power.lines.push_back(line);
  }
  for (const auto& g : arr(pw, "generators")) {
    Generator gen;
    gen.id = str(g, "id");
    gen.node = str(g, "node");
    gen.cost = num(g, "cost");
    gen.p_min = num(g, "p_min");
    gen.p_max = num(g, "p_max");
    const std::string kind = g.value("kind", "coal");
    if (kind == "coal") {
      gen.kind = FuelKind::Coal;
    } else if (kind == "gas") {
      gen.kind = FuelKind::GasFired;
      gen.gamma = num(g, "gamma");
      gen.gas_node = str(g, "gas_node");
    } else {
      throw ParseError("generator '" + gen.id + "': kind must be 'coal' or 'gas'");
    }
    inst.power.generators.push_back(gen);
  }
  for (const auto& d : arr(pw, "loads")) {
    PowerLoad load;
    load.id = str(d, "id");
    load.node = str(d, "node");
    load.demand = num(d, "demand");
    load.shed_cost = num(d, "shed_cost");
    inst.power.loads.push_back(load);
  }
  inst.power.slack_node = pw.value("slack", "");
  if (pw.contains("ptdf")) {
    if (!pw["ptdf"].is_array()) throw ParseError("field 'ptdf' must be an array of rows");
    for (const auto& row : pw["ptdf"]) {
      std::vector<double> r;
      for (const auto& v : row) r.push_back(v.get<double>());
      inst.power.ptdf_rows.push_back(std::move(r));
    }
  }

  if (!doc.contains("gas")) throw ParseError("missing top-level key 'gas'");
  const json& gs = doc["gas"];
  for (const auto& n : arr(gs, "nodes")) {
    GasNode node;
    node.id = str(n, "id");
    node.pressure_min = num(n, "pressure_min");
    node.pressure_max = num(n, "pressure_max");
    inst.gas.nodes.push_back(node);
  }
  for (const auto& w : arr(gs, "wells")) {
    GasWell well;
    well.id = str(w, "id");
    well.node = str(w, "node");
    well.cost = num(w, "cost");
    well.capacity = num(w, "capacity");
    inst.gas.wells.push_back(well);
  }
  for (const auto& p : arr(gs, "pipelines")) {
    GasPipeline pipe;
    pipe.id = str(p, "id");
    pipe.from = str(p, "from");
    pipe.to = str(p, "to");
    pipe.weymouth = num(p, "weymouth");
    pipe.limit = num(p, "limit");
    if (p.contains("baseline_flow")) pipe.baseline_flow = num(p, "baseline_flow");
    inst.gas.pipelines.push_back(pipe);
  }
  for (const auto& c : arr(gs, "compressors")) {
    GasCompressor comp;
    comp.id = str(c, "id");
    comp.from = str(c, "from");
    comp.to = str(c, "to");
    comp.ratio = num(c, "ratio");
    comp.limit = num(c, "limit");
    inst.gas.compressors.push_back(comp);
  }
  for (const auto& d : arr(gs, "loads")) {
    GasLoad load;
    load.id = str(d, "id");
    load.node = str(d, "node");
    load.demand = num(d, "demand");
    load.shed_cost = num(d, "shed_cost");
    inst.gas.loads.push_back(load);
  }

  for (const auto& f : arr(doc, "p2g")) {
    P2GFacility fac;
    fac.id = str(f, "id");
    fac.power_node = str(f, "power_node");
    fac.gas_node = str(f, "gas_node");
    fac.gamma = num(f, "gamma");
    fac.capacity = num(f, "capacity");
    inst.p2g.push_back(fac);
  }

  if (!doc.contains("attack")) throw ParseError("missing top-level key 'attack'");
  const json& at = doc["attack"];
  inst.tau_p = num(at, "tau_p");
  inst.tau_g = num(at, "tau_g");
  if (at.contains("budget")) inst.budget = num(at, "budget");

  if (!doc.contains("pwl")) throw ParseError("missing top-level key 'pwl'");
  inst.pwl_segments = static_cast<int>(num(doc["pwl"], "segments"));

  auto diags = validate(inst);
  if (!diags.empty()) throw ValidationError(std::move(diags));
  return inst;
}

IEGSInstance load_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open instance file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_instance(buf.str());
}

std::string save_instance(const IEGSInstance& inst) {
  json doc;
  doc["name"] = inst.name;
  json pw;
  pw["nodes"] = inst.power.nodes;
  pw["slack"] = inst.power.slack_node;
  pw["lines"] = json::array();
  for (const auto& l : inst.power.lines)
    pw["lines"].push_back({{"id", l.id}, {"from", l.from}, {"to", l.to},
                           {"reactance", l.reactance}, {"limit", l.limit}});
  pw["generators"] = json::array();
  for (const auto& g : inst.power.generators) {
    json jg{{"id", g.id}, {"node", g.node}, {"cost", g.cost},
            {"p_min", g.p_min}, {"p_max", g.p_max}};
    if (g.kind == FuelKind::GasFired) {
      jg["kind"] = "gas";
      jg["gamma"] = g.gamma;
      jg["gas_node"] = g.gas_node;
    } else {
      jg["kind"] = "coal";
    }
    pw["generators"].push_back(jg);
  }
  pw["loads"] = json::array();
  for (const auto& d : inst.power.loads)
    pw["loads"].push_back({{"id", d.id}, {"node", d.node}, {"demand", d.demand},
                           {"shed_cost", d.shed_cost}});
  if (!inst.power.ptdf_rows.empty()) pw["ptdf"] = inst.power.ptdf_rows;
  doc["power"] = pw;

  json gs;
  gs["nodes"] = json::array();
  for (const auto& n : inst.gas.nodes)
    gs["nodes"].push_back({{"id", n.id}, {"pressure_min", n.pressure_min},
                           {"pressure_max", n.pressure_max}});
  gs["wells"] = json::array();
  for (const auto& w : inst.gas.wells)
    gs["wells"].push_back({{"id", w.id}, {"node", w.node}, {"cost", w.cost},
                           {"capacity", w.capacity}});
  gs["pipelines"] = json::array();
  for (const auto& p : inst.gas.pipelines) {
    json jp{{"id", p.id}, {"from", p.from}, {"to", p.to},
            {"weymouth", p.weymouth}, {"limit", p.limit}};
    if (p.baseline_flow) jp["baseline_flow"] = *p.baseline_flow;
    gs["pipelines"].push_back(jp);
  }
  gs["compressors"] = json::array();
  for (const auto& c : inst.gas.compressors)
    gs["compressors"].push_back({{"id", c.id}, {"from", c.from}, {"to", c.to},
                                 {"ratio", c.ratio}, {"limit", c.limit}});
  gs["loads"] = json::array();
  for (const auto& d : inst.gas.loads)
    gs["loads"].push_back({{"id", d.id}, {"node", d.node}, {"demand", d.demand},
                           {"shed_cost", d.shed_cost}});
  doc["gas"] = gs;

  doc["p2g"] = json::array();
  for (const auto& f : inst.p2g)
    doc["p2g"].push_back({{"id", f.id}, {"power_node", f.power_node},
                          {"gas_node", f.gas_node}, {"gamma", f.gamma},
                          {"capacity", f.capacity}});

  doc["attack"] = {{"tau_p", inst.tau_p}, {"tau_g", inst.tau_g}};
  if (inst.budget) doc["attack"]["budget"] = *inst.budget;
  doc["pwl"] = {{"segments", inst.pwl_segments}};
  return doc.dump(2);
}

namespace {

template <typename T>
void check_unique_ids(const std::vector<T>& items, const std::string& what,
                      std::vector<Diagnostic>& diags) {
  std::set<std::string> seen;
  for (const auto& item : items)
    if (!seen.insert(item.id).second)
      diags.push_back({what, "duplicate id '" + item.id + "'"});
}

bool finite(double v) { return std::isfinite(v); }

} // namespace

std::vector<Diagnostic> validate(const IEGSInstance& inst) {
  std::vector<Diagnostic> diags;
  const auto& ps = inst.power;
  const auto& gs = inst.gas;

  std::set<std::string> pnodes(ps.nodes.begin(), ps.nodes.end());
  if (pnodes.size() != ps.nodes.size())
    diags.push_back({"power.nodes", "duplicate node ids"});
  std::set<std::string> gnodes;
  for (const auto& n : gs.nodes)
    if (!gnodes.insert(n.id).second)
      diags.push_back({"gas.nodes", "duplicate node id '" + n.id + "'"});

  check_unique_ids(ps.lines, "power.lines", diags);
  check_unique_ids(ps.generators, "power.generators", diags);
  check_unique_ids(ps.loads, "power.loads", diags);
  check_unique_ids(gs.wells, "gas.wells", diags);
  check_unique_ids(gs.pipelines, "gas.pipelines", diags);
  check_unique_ids(gs.compressors, "gas.compressors", diags);
  check_unique_ids(gs.loads, "gas.loads", diags);

  auto require_pnode = [&](const std::string& node, const std::string& field) {
    if (!pnodes.count(node))
      diags.push_back({field, "references missing power node '" + node + "'"});
  };
  auto require_gnode = [&](const std::string& node, const std::string& field) {
    if (!gnodes.count(node))
      diags.push_back({field, "references missing gas node '" + node + "'"});
  };

  if (!ps.nodes.empty() && !pnodes.count(ps.slack_node))
    diags.push_back({"power.slack", "slack node '" + ps.slack_node + "' not in node set"});

  for (const auto& l : ps.lines) {
    require_pnode(l.from, "power.lines[" + l.id + "].from");
    require_pnode(l.to, "power.lines[" + l.id + "].to");
    if (!(l.limit > 0)) diags.push_back({"power.lines[" + l.id + "].limit", "limit must be > 0"});
    if (ps.ptdf_rows.empty() && !(l.reactance > 0))
      diags.push_back({"power.lines[" + l.id + "].reactance",
                       "reactance must be > 0 when no explicit PTDF is given"});
  }
  for (const auto& g : ps.generators) {
    require_pnode(g.node, "power.generators[" + g.id + "].node");
    if (g.p_min > g.p_max)
      diags.push_back({"power.generators[" + g.id + "]", "p_min exceeds p_max"});
    if (g.cost < 0) diags.push_back({"power.generators[" + g.id + "].cost", "cost must be >= 0"});
    if (g.kind == FuelKind::GasFired) {
      if (!(g.gamma > 0))
        diags.push_back({"power.generators[" + g.id + "].gamma", "conversion ratio must be > 0"});
      require_gnode(g.gas_node, "power.generators[" + g.id + "].gas_node");
    }
  }
  for (const auto& d : ps.loads) {
    require_pnode(d.node, "power.loads[" + d.id + "].node");
    if (d.demand < 0) diags.push_back({"power.loads[" + d.id + "].demand", "demand must be >= 0"});
    if (d.shed_cost < 0)
      diags.push_back({"power.loads[" + d.id + "].shed_cost", "cost must be >= 0"});
  }
  if (!ps.ptdf_rows.empty()) {
    if (ps.ptdf_rows.size() != ps.lines.size())
      diags.push_back({"power.ptdf", "row count must equal line count"});
    for (const auto& row : ps.ptdf_rows)
      if (row.size() != ps.nodes.size()) {
        diags.push_back({"power.ptdf", "column count must equal node count"});
        break;
      }
  }

  for (const auto& n : gs.nodes) {
    if (n.pressure_min < 0)
      diags.push_back({"gas.nodes[" + n.id + "]", "pressure_min must be >= 0"});
    if (n.pressure_min > n.pressure_max)
      diags.push_back({"gas.nodes[" + n.id + "]", "pressure_min exceeds pressure_max"});
  }
  for (const auto& w : gs.wells) {
    require_gnode(w.node, "gas.wells[" + w.id + "].node");
    if (w.cost < 0) diags.push_back({"gas.wells[" + w.id + "].cost", "cost must be >= 0"});
    if (w.capacity < 0)
      diags.push_back({"gas.wells[" + w.id + "].capacity", "capacity must be >= 0"});
  }
  for (const auto& p : gs.pipelines) {
    require_gnode(p.from, "gas.pipelines[" + p.id + "].from");
    require_gnode(p.to, "gas.pipelines[" + p.id + "].to");
    if (!(p.weymouth > 0))
      diags.push_back({"gas.pipelines[" + p.id + "].weymouth", "Weymouth constant must be > 0"});
    if (!(p.limit > 0))
      diags.push_back({"gas.pipelines[" + p.id + "].limit", "limit must be > 0"});
    if (p.baseline_flow && std::abs(*p.baseline_flow) > p.limit + 1e-9)
      diags.push_back({"gas.pipelines[" + p.id + "].baseline_flow",
                       "baseline flow magnitude exceeds pipeline limit"});
  }
  for (const auto& c : gs.compressors) {
    require_gnode(c.from, "gas.compressors[" + c.id + "].from");
    require_gnode(c.to, "gas.compressors[" + c.id + "].to");
    if (c.ratio < 1.0)
      diags.push_back({"gas.compressors[" + c.id + "].ratio", "compression ratio must be >= 1"});
    if (!(c.limit > 0))
      diags.push_back({"gas.compressors[" + c.id + "].limit", "limit must be > 0"});
  }
  for (const auto& d : gs.loads) {
    require_gnode(d.node, "gas.loads[" + d.id + "].node");
    if (d.demand < 0) diags.push_back({"gas.loads[" + d.id + "].demand", "demand must be >= 0"});
    if (d.shed_cost < 0)
      diags.push_back({"gas.loads[" + d.id + "].shed_cost", "cost must be >= 0"});
  }

  for (const auto& f : inst.p2g) {
    require_pnode(f.power_node, "p2g[" + f.id + "].power_node");
    require_gnode(f.gas_node, "p2g[" + f.id + "].gas_node");
    if (!(f.gamma > 0)) diags.push_back({"p2g[" + f.id + "].gamma", "conversion must be > 0"});
    if (f.capacity < 0) diags.push_back({"p2g[" + f.id + "].capacity", "capacity must be >= 0"});
  }

  if (!finite(inst.tau_p) || inst.tau_p < 0)
    diags.push_back({"attack.tau_p", "tau_p must be a finite value >= 0"});
  if (!finite(inst.tau_g) || inst.tau_g < 0)
    diags.push_back({"attack.tau_g", "tau_g must be a finite value >= 0"});
  if (inst.budget && *inst.budget < 0)
    diags.push_back({"attack.budget", "budget must be >= 0"});
  if (inst.pwl_segments < 1)
    diags.push_back({"pwl.segments", "segment count must be >= 1"});
  else if (inst.pwl_segments % 2 != 0)
    diags.push_back({"pwl.segments", "segment count must be even so 0 is a breakpoint"});

  // A load-redistribution attack needs at least two loads on one side to
  // shift anything while keeping balance.
  if (ps.loads.size() < 2 && gs.loads.size() < 2)
    diags.push_back({"loads", "need at least two power loads or two gas loads"});

  return diags;
}

std::size_t power_node_index(const PowerSystem& ps, const std::string& id) {
  auto it = std::find(ps.nodes.begin(), ps.nodes.end(), id);
  if (it == ps.nodes.end()) throw DimensionError("unknown power node '" + id + "'");
  return static_cast<std::size_t>(it - ps.nodes.begin());
}

std::size_t gas_node_index(const GasSystem& gs, const std::string& id) {
  for (std::size_t i = 0; i < gs.nodes.size(); ++i)
    if (gs.nodes[i].id == id) return i;
  throw DimensionError("unknown gas node '" + id + "'");
}

} // namespace iegs
