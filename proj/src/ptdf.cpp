#include "iegs/ptdf.hpp"

#include <queue>
#include <set>

#include <Eigen/Dense>

#include "iegs/errors.hpp"
#include "iegs/instance.hpp"

namespace iegs {

PtdfMatrix build_ptdf(const PowerSystem& power) {
  PtdfMatrix out;
  out.slack_node = power.slack_node;
  out.node_order = power.nodes;
  for (const auto& l : power.lines) out.line_order.push_back(l.id);

  if (!power.ptdf_rows.empty()) {
    out.beta = power.ptdf_rows;
    return out;
  }

  const std::size_t n = power.nodes.size();
  const std::size_t m = power.lines.size();
  if (n == 0) return out;
  const std::size_t slack = power_node_index(power, power.slack_node);

  // Connectivity check first; a disconnected network makes the reduced
  // susceptance matrix singular in a confusing way.
  {
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& l : power.lines) {
      auto a = power_node_index(power, l.from);
      auto b = power_node_index(power, l.to);
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(slack);
    seen[slack] = true;
    std::size_t count = 1;
    while (!q.empty()) {
      auto v = q.front();
      q.pop();
      for (auto w : adj[v])
        if (!seen[w]) {
          seen[w] = true;
          ++count;
          q.push(w);
        }
    }
    if (count != n) throw SolveError("power network is disconnected");
  }

  Eigen::MatrixXd bbus = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                               static_cast<Eigen::Index>(n));
  for (const auto& l : power.lines) {
    if (!(l.reactance > 0))
      throw SolveError("line '" + l.id + "' needs positive reactance for PTDF build");
    const double b = 1.0 / l.reactance;
    const auto i = static_cast<Eigen::Index>(power_node_index(power, l.from));
    const auto j = static_cast<Eigen::Index>(power_node_index(power, l.to));
    bbus(i, i) += b;
    bbus(j, j) += b;
    bbus(i, j) -= b;
    bbus(j, i) -= b;
  }

  // Reduced system without the slack row/column.
  const auto nr = static_cast<Eigen::Index>(n - 1);
  Eigen::MatrixXd bred(nr, nr);
  std::vector<Eigen::Index> keep;
  for (std::size_t k = 0; k < n; ++k)
    if (k != slack) keep.push_back(static_cast<Eigen::Index>(k));
  for (Eigen::Index r = 0; r < nr; ++r)
    for (Eigen::Index c = 0; c < nr; ++c) bred(r, c) = bbus(keep[r], keep[c]);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(bred);
  if (!lu.isInvertible()) throw SolveError("singular susceptance submatrix; cannot build PTDF");

  out.beta.assign(m, std::vector<double>(n, 0.0));
  for (Eigen::Index c = 0; c < nr; ++c) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(nr);
    e(c) = 1.0;
    Eigen::VectorXd theta_red = lu.solve(e);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < nr; ++r) theta(keep[r]) = theta_red(r);
    const auto node = static_cast<std::size_t>(keep[c]);
    for (std::size_t li = 0; li < m; ++li) {
      const auto& l = power.lines[li];
      const auto i = static_cast<Eigen::Index>(power_node_index(power, l.from));
      const auto j = static_cast<Eigen::Index>(power_node_index(power, l.to));
      out.beta[li][node] = (theta(i) - theta(j)) / l.reactance;
    }
  }
  return out;
}

std::vector<double> ptdf_flows(const PtdfMatrix& ptdf, const std::vector<double>& injections) {
  if (injections.size() != ptdf.node_order.size())
    throw DimensionError("injection vector length does not match node count");
  std::vector<double> flows(ptdf.beta.size(), 0.0);
  for (std::size_t l = 0; l < ptdf.beta.size(); ++l) {
    double f = 0.0;
    for (std::size_t k = 0; k < injections.size(); ++k) f += ptdf.beta[l][k] * injections[k];
    flows[l] = f;
  }
  return flows;
}

} // namespace iegs
