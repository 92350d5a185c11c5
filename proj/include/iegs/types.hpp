#pragma once

#include <optional>
#include <string>
#include <vector>

namespace iegs {

// Generator fuel kind. Gas-fired units consume gamma * p [Sm3/h] at their
// attached gas node.
enum class FuelKind { Coal, GasFired };

struct Generator {
  std::string id;
  std::string node;
  FuelKind kind = FuelKind::Coal;
  double cost = 0.0;     // $/MWh
  double p_min = 0.0;    // MW
  double p_max = 0.0;    // MW
  double gamma = 0.0;    // Sm3/MWh, gas-fired only
  std::string gas_node;  // gas-fired only
};

struct PowerLoad {
  std::string id;
  std::string node;
  double demand = 0.0;    // MW
  double shed_cost = 0.0; // $/MWh
};

struct PowerLine {
  std::string id;
  std::string from;
  std::string to;
  double reactance = 0.0; // p.u.
  double limit = 0.0;     // MW
};

struct PowerSystem {
  std::vector<std::string> nodes;
  std::vector<PowerLine> lines;
  std::vector<Generator> generators;
  std::vector<PowerLoad> loads;
  std::string slack_node;
  // Optional explicit PTDF rows (lines x nodes, row-major). When empty the
  // matrix is computed from reactances.
  std::vector<std::vector<double>> ptdf_rows;
};

struct GasNode {
  std::string id;
  double pressure_min = 0.0; // squared pressure bounds
  double pressure_max = 0.0;
};

struct GasWell {
  std::string id;
  std::string node;
  double cost = 0.0;     // $/(Sm3/h)
  double capacity = 0.0; // Sm3/h
};

struct GasPipeline {
  std::string id;
  std::string from; // m(l)
  std::string to;   // n(l)
  double weymouth = 0.0; // W_l
  double limit = 0.0;    // Sm3/h
  // Baseline flow measurement used by the stealth conditions; when no value
  // is given in the instance file it defaults to the no-attack dispatch flow.
  std::optional<double> baseline_flow;
};

struct GasCompressor {
  std::string id;
  std::string from; // inlet m(c)
  std::string to;   // outlet n(c)
  double ratio = 1.0; // alpha_c >= 1
  double limit = 0.0; // Sm3/h
};

struct GasLoad {
  std::string id;
  std::string node;
  double demand = 0.0;    // Sm3/h
  double shed_cost = 0.0; // $/(Sm3/h)
};

struct GasSystem {
  std::vector<GasNode> nodes;
  std::vector<GasWell> wells;
  std::vector<GasPipeline> pipelines;
  std::vector<GasCompressor> compressors;
  std::vector<GasLoad> loads;
};

struct P2GFacility {
  std::string id;
  std::string power_node;
  std::string gas_node;
  double gamma = 0.0;    // Sm3/MWh conversion
  double capacity = 0.0; // MW drawn
};

struct IEGSInstance {
  std::string name;
  PowerSystem power;
  GasSystem gas;
  std::vector<P2GFacility> p2g;
  double tau_p = 0.0;
  double tau_g = 0.0;
  std::optional<double> budget;
  int pwl_segments = 8;
};

// Dense PTDF matrix beta[line][node]; the slack column is identically zero.
struct PtdfMatrix {
  std::vector<std::vector<double>> beta;
  std::string slack_node;
  std::vector<std::string> node_order;
  std::vector<std::string> line_order;

  double at(std::size_t line, std::size_t node) const { return beta[line][node]; }
};

struct Diagnostic {
  std::string field;
  std::string message;
};

} // namespace iegs
