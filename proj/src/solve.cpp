#include "iegs/solve.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <queue>

#include "iegs/errors.hpp"
#include "iegs/simplex.hpp"

namespace iegs::milp {

namespace {

constexpr double kIntTol = 1e-6;

struct Node {
  double bound;                 // parent LP objective (Min sense)
  long id;                      // tie-break, FIFO
  std::shared_ptr<const Simplex::Basis> warm;
  // Chain of bound fixings from the root.
  struct Fix {
    int var;
    double lo, hi;
    std::shared_ptr<const Fix> parent;
  };
  std::shared_ptr<const Fix> fixes;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound; // min-heap on bound
    return a.id > b.id;
  }
};

class BundledBackend final : public SolverBackend {
 public:
  std::string name() const override { return "bundled"; }
  bool supports_concurrent_solves() const override { return true; }

  Solution solve(const Model& input, const SolveParams& params) override {
    input.check_well_formed();

    // Canonicalize to Min internally.
    const bool maximize = input.obj_sense == ObjSense::Max;
    Model model = input;
    if (maximize) {
      model.obj_sense = ObjSense::Min;
      for (auto& c : model.obj) c = -c;
      model.obj_offset = -model.obj_offset;
    }

    Solution out = model.num_binaries() == 0 ? solve_lp(model, params)
                                             : solve_mip(model, params);
    if (maximize) {
      out.objective = -out.objective;
      for (auto& d : out.duals) d = -d;
      for (auto& r : out.reduced_costs) r = -r;
      if (out.status == SolveStatus::Unbounded) out.status = SolveStatus::Unbounded;
    }
    return out;
  }

 private:
  static Solution solve_lp(const Model& model, const SolveParams& params) {
    Simplex splx(model);
    auto r = splx.solve(nullptr, nullptr, nullptr, params.lp_iteration_cap);
    Solution s;
    s.status = r.status;
    s.lp_iterations = r.iterations;
    if (r.status == SolveStatus::Optimal) {
      s.x = r.x;
      s.objective = r.objective + model.obj_offset;
      s.duals = r.duals;
      s.reduced_costs = r.reduced_costs;
    }
    return s;
  }

  static Solution solve_mip(const Model& model, const SolveParams& params) {
    Solution out;
    Simplex splx(model);

    std::vector<int> binaries;
    for (std::size_t j = 0; j < model.vars.size(); ++j)
      if (model.vars[j].kind == VarKind::Binary) binaries.push_back(static_cast<int>(j));

    std::vector<double> lo(model.vars.size()), hi(model.vars.size());
    auto load_bounds = [&](const std::shared_ptr<const Node::Fix>& chain) {
      for (std::size_t j = 0; j < model.vars.size(); ++j) {
        lo[j] = model.vars[j].lo;
        hi[j] = model.vars[j].hi;
      }
      for (auto f = chain; f; f = f->parent) {
        const auto v = static_cast<std::size_t>(f->var);
        lo[v] = std::max(lo[v], f->lo);
        hi[v] = std::min(hi[v], f->hi);
      }
    };

    bool have_incumbent = false;
    double incumbent_obj = kInf; // Min sense, without offset
    std::vector<double> incumbent_x;

    if (params.mip_start && model.is_feasible_point(*params.mip_start, 1e-6)) {
      have_incumbent = true;
      incumbent_x = *params.mip_start;
      incumbent_obj = 0.0;
      for (std::size_t j = 0; j < model.vars.size(); ++j)
        incumbent_obj += model.obj[j] * incumbent_x[j];
    }

    long next_id = 0;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    open.push(Node{-kInf, next_id++, nullptr, nullptr});

    long nodes_processed = 0;
    long lp_iterations = 0;
    bool hit_cap = false;

    auto fractional_binary = [&](const std::vector<double>& x) {
      int best = -1;
      double best_frac = kIntTol;
      for (int j : binaries) {
        const double v = x[static_cast<std::size_t>(j)];
        const double frac = std::abs(v - std::round(v));
        if (frac > best_frac) {
          best_frac = frac;
          best = j;
        }
      }
      return best;
    };

    while (!open.empty()) {
      if (nodes_processed >= params.node_cap || lp_iterations >= params.lp_iteration_cap) {
        hit_cap = true;
        break;
      }
      Node node = open.top();
      open.pop();
      if (have_incumbent && node.bound >= incumbent_obj - params.gap) continue; // pruned

      load_bounds(node.fixes);
      auto r = splx.solve(&lo, &hi, node.warm.get(),
                          params.lp_iteration_cap - lp_iterations);
      ++nodes_processed;
      lp_iterations += r.iterations;

      if (r.status == SolveStatus::IterationLimit) {
        hit_cap = true;
        break;
      }
      if (r.status == SolveStatus::Infeasible) continue;
      if (r.status == SolveStatus::Unbounded) {
        // Unbounded LP relaxation at the root means an unbounded MILP ray
        // unless the binaries bound it; report unbounded, callers treat it
        // as a modeling error.
        out.status = SolveStatus::Unbounded;
        out.nodes = nodes_processed;
        out.lp_iterations = lp_iterations;
        return out;
      }
      if (have_incumbent && r.objective >= incumbent_obj - params.gap) continue;

      int branch_var = fractional_binary(r.x);
      if (branch_var < 0) {
        // Integral: snap and polish with the binaries pinned so the stored
        // point is an exact vertex of the fixed-binary polytope.
        std::vector<double> plo = lo, phi = hi;
        for (int j : binaries) {
          const auto v = static_cast<std::size_t>(j);
          const double snapped = std::round(r.x[v]);
          plo[v] = phi[v] = snapped;
        }
        auto polished = splx.solve(&plo, &phi, &r.basis, params.lp_iteration_cap - lp_iterations);
        lp_iterations += polished.iterations;
        if (polished.status == SolveStatus::Optimal) {
          if (polished.objective < incumbent_obj - 1e-12) {
            have_incumbent = true;
            incumbent_obj = polished.objective;
            incumbent_x = polished.x;
          }
          continue;
        }
        // Snapping broke feasibility: the relaxation optimum only looked
        // integral. Branch on any binary that is still unfixed.
        for (int j : binaries) {
          const auto v = static_cast<std::size_t>(j);
          if (lo[v] < hi[v] - 0.5) {
            branch_var = j;
            break;
          }
        }
        if (branch_var < 0) continue; // fully fixed and infeasible after all
      }

      auto warm = std::make_shared<Simplex::Basis>(std::move(r.basis));
      const auto bv = static_cast<std::size_t>(branch_var);
      auto fix0 = std::make_shared<Node::Fix>(Node::Fix{branch_var, lo[bv], 0.0, node.fixes});
      auto fix1 = std::make_shared<Node::Fix>(Node::Fix{branch_var, 1.0, hi[bv], node.fixes});
      open.push(Node{r.objective, next_id++, warm, fix0});
      open.push(Node{r.objective, next_id++, warm, fix1});
    }

    out.nodes = nodes_processed;
    out.lp_iterations = lp_iterations;
    if (hit_cap) {
      out.status = SolveStatus::IterationLimit;
      if (have_incumbent) {
        out.x = incumbent_x;
        out.objective = incumbent_obj + model.obj_offset;
      }
      return out;
    }
    if (!have_incumbent) {
      out.status = SolveStatus::Infeasible;
      return out;
    }
    out.status = SolveStatus::Optimal;
    out.x = incumbent_x;
    out.objective = incumbent_obj + model.obj_offset;
    return out;
  }
};

std::map<std::string, std::shared_ptr<SolverBackend>>& registry() {
  static std::map<std::string, std::shared_ptr<SolverBackend>> reg;
  return reg;
}

} // namespace

std::shared_ptr<SolverBackend> bundled_backend() {
  static std::shared_ptr<SolverBackend> instance = std::make_shared<BundledBackend>();
  return instance;
}

std::shared_ptr<SolverBackend> backend_by_name(const std::string& name) {
  if (name.empty() || name == "bundled") return bundled_backend();
  auto it = registry().find(name);
  if (it == registry().end()) throw SolveError("unknown solver backend '" + name + "'");
  return it->second;
}

void register_backend(const std::shared_ptr<SolverBackend>& backend) {
  registry()[backend->name()] = backend;
}

Solution solve(const Model& model, const SolveParams& params) {
  return backend_by_name(params.backend)->solve(model, params);
}

Model dualize(const Model& lp) {
  lp.check_well_formed();
  if (lp.num_binaries() != 0) throw DimensionError("dualize: model must be a pure LP");

  // Canonical primal: min c'x st rows, bounds treated as rows here so the
  // dual has one variable per row and per finite bound.
  const bool maximize = lp.obj_sense == ObjSense::Max;
  Model dual;
  dual.obj_sense = ObjSense::Max;

  // Dual variable per row: LE -> y <= 0 (for min primal), GE -> y >= 0,
  // EQ -> free; objective coefficient rhs_i.
  std::vector<int> row_vars;
  for (std::size_t i = 0; i < lp.rows.size(); ++i) {
    const auto& r = lp.rows[i];
    double lo = -kInf, hi = kInf;
    if (r.sense == Sense::LE)
      hi = 0.0;
    else if (r.sense == Sense::GE)
      lo = 0.0;
    row_vars.push_back(dual.add_continuous("y[" + r.name + "#" + std::to_string(i) + "]", lo, hi,
                                           r.rhs));
  }
  // Dual variable per finite bound: x_j >= lo -> multiplier zl >= 0 with
  // objective lo_j; x_j <= hi -> zu <= 0 with objective hi_j.
  std::vector<int> lo_vars(lp.vars.size(), -1), hi_vars(lp.vars.size(), -1);
  for (std::size_t j = 0; j < lp.vars.size(); ++j) {
    const auto& v = lp.vars[j];
    if (std::isfinite(v.lo))
      lo_vars[j] = dual.add_continuous("zl[" + v.name + "]", 0.0, kInf, v.lo);
    if (std::isfinite(v.hi))
      hi_vars[j] = dual.add_continuous("zu[" + v.name + "]", -kInf, 0.0, v.hi);
  }

  // Stationarity per primal column: sum_i a_ij y_i + zl_j + zu_j = c_j.
  std::vector<std::vector<std::pair<int, double>>> col_coeffs(lp.vars.size());
  for (std::size_t i = 0; i < lp.rows.size(); ++i)
    for (const auto& [col, val] : lp.rows[i].coeffs)
      col_coeffs[static_cast<std::size_t>(col)].push_back({row_vars[i], val});
  for (std::size_t j = 0; j < lp.vars.size(); ++j) {
    auto coeffs = col_coeffs[j];
    if (lo_vars[j] >= 0) coeffs.push_back({lo_vars[j], 1.0});
    if (hi_vars[j] >= 0) coeffs.push_back({hi_vars[j], 1.0});
    const double cj = maximize ? -lp.obj[j] : lp.obj[j];
    dual.add_row("stat[" + lp.vars[j].name + "]", Sense::EQ, cj, std::move(coeffs));
  }
  dual.obj_offset = maximize ? -lp.obj_offset : lp.obj_offset;
  if (maximize) {
    // Dual of the negated problem; flip back so dual optimum == primal optimum.
    dual.obj_sense = ObjSense::Min;
    for (auto& c : dual.obj) c = -c;
    dual.obj_offset = -dual.obj_offset;
  }
  return dual;
}

std::vector<int> linearize_complementarity(Model& model,
                                           const std::vector<ComplementarityPair>& pairs) {
  std::vector<int> flags;
  int k = 0;
  for (const auto& p : pairs) {
    const std::string base =
        p.label.empty() ? ("compl#" + std::to_string(k)) : p.label;
    const int b = model.add_binary("flag[" + base + "]");
    flags.push_back(b);
    // dual <= M_dual * b
    auto dcoeffs = p.dual;
    dcoeffs.push_back({b, -p.big_m_dual});
    model.add_row("mdual[" + base + "]", Sense::LE, -p.dual_constant, std::move(dcoeffs));
    // slack <= M_slack * (1 - b)  ->  slack + M_slack*b <= M_slack
    auto scoeffs = p.slack;
    scoeffs.push_back({b, p.big_m_slack});
    model.add_row("mslack[" + base + "]", Sense::LE, p.big_m_slack - p.slack_constant,
                  std::move(scoeffs));
    ++k;
  }
  return flags;
}

bool big_m_audit_flagged(const Model& model, const std::vector<ComplementarityPair>& pairs,
                         const std::vector<double>& x, double tol) {
  (void)model;
  for (const auto& p : pairs) {
    double dual = p.dual_constant;
    for (const auto& [col, val] : p.dual) dual += val * x[static_cast<std::size_t>(col)];
    double slack = p.slack_constant;
    for (const auto& [col, val] : p.slack) slack += val * x[static_cast<std::size_t>(col)];
    if (dual >= p.big_m_dual - tol * std::max(1.0, p.big_m_dual)) return true;
    if (slack >= p.big_m_slack - tol * std::max(1.0, p.big_m_slack)) return true;
  }
  return false;
}

} // namespace iegs::milp
