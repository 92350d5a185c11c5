#pragma once

#include "iegs/types.hpp"

namespace iegs {

/// DC power transfer distribution factors from line reactances: beta[l][k] is
/// the flow induced on line l (oriented from->to) by injecting 1 MW at node k
/// and withdrawing it at the slack. When the instance carries explicit PTDF
/// rows those are returned verbatim. Throws SolveError for a disconnected
/// network or a singular susceptance block.
PtdfMatrix build_ptdf(const PowerSystem& power);

/// Line flows for a nodal injection vector (ordered like power.nodes).
std::vector<double> ptdf_flows(const PtdfMatrix& ptdf, const std::vector<double>& injections);

} // namespace iegs
