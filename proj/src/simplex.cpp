#include "iegs/simplex.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "iegs/errors.hpp"

namespace iegs::milp {

struct Simplex::LuState {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool ok = false;
};

Simplex::Simplex(const Model& model) : lu_(new LuState) {
  m_ = model.rows.size();
  nstruct_ = model.vars.size();
  ncols_ = nstruct_ + m_;

  cols_.assign(ncols_, {});
  for (std::size_t i = 0; i < m_; ++i) {
    const auto& row = model.rows[i];
    for (const auto& [col, val] : row.coeffs)
      if (val != 0.0) cols_[static_cast<std::size_t>(col)].push_back({static_cast<int>(i), val});
  }
  // Merge duplicate entries per column (builders may emit repeated columns).
  for (auto& col : cols_) {
    std::sort(col.begin(), col.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<int, double>> merged;
    for (const auto& [r, v] : col) {
      if (!merged.empty() && merged.back().first == r)
        merged.back().second += v;
      else
        merged.push_back({r, v});
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const auto& e) { return e.second == 0.0; }),
                 merged.end());
    col = std::move(merged);
  }
  for (std::size_t i = 0; i < m_; ++i) cols_[nstruct_ + i].push_back({static_cast<int>(i), 1.0});

  rhs_.resize(m_);
  cost_.assign(ncols_, 0.0);
  base_lo_.assign(ncols_, -kInf);
  base_hi_.assign(ncols_, kInf);
  for (std::size_t j = 0; j < nstruct_; ++j) {
    cost_[j] = model.obj[j];
    base_lo_[j] = model.vars[j].lo;
    base_hi_[j] = model.vars[j].hi;
  }
  for (std::size_t i = 0; i < m_; ++i) {
    const auto& row = model.rows[i];
    rhs_[i] = row.rhs;
    switch (row.sense) {
      case Sense::LE: base_lo_[nstruct_ + i] = 0.0; break;                      // ax + s = b, s >= 0
      case Sense::GE: base_hi_[nstruct_ + i] = 0.0; break;                      // s <= 0
      case Sense::EQ: base_lo_[nstruct_ + i] = base_hi_[nstruct_ + i] = 0.0; break;
    }
  }
}

Simplex::~Simplex() = default;

double Simplex::feas_tol(int col) const {
  const auto j = static_cast<std::size_t>(col);
  double scale = 1.0;
  if (std::isfinite(lo_[j])) scale = std::max(scale, std::abs(lo_[j]));
  if (std::isfinite(hi_[j])) scale = std::max(scale, std::abs(hi_[j]));
  return kFeasTol * scale;
}

void Simplex::install_bounds(const std::vector<double>* lo_override,
                             const std::vector<double>* hi_override) {
  lo_ = base_lo_;
  hi_ = base_hi_;
  if (lo_override)
    for (std::size_t j = 0; j < nstruct_; ++j) lo_[j] = (*lo_override)[j];
  if (hi_override)
    for (std::size_t j = 0; j < nstruct_; ++j) hi_[j] = (*hi_override)[j];
}

void Simplex::default_basis() {
  basic_.resize(m_);
  where_.assign(ncols_, AtLower);
  for (std::size_t j = 0; j < ncols_; ++j) {
    if (std::isfinite(lo_[j]))
      where_[j] = AtLower;
    else if (std::isfinite(hi_[j]))
      where_[j] = AtUpper;
    else
      where_[j] = FreeZero;
  }
  for (std::size_t i = 0; i < m_; ++i) {
    basic_[i] = static_cast<int>(nstruct_ + i);
    where_[nstruct_ + i] = InBasis;
  }
}

bool Simplex::adopt_basis(const Basis& warm) {
  if (warm.basic.size() != m_ || warm.where.size() != ncols_) return false;
  std::vector<bool> used(ncols_, false);
  for (int col : warm.basic) {
    if (col < 0 || col >= static_cast<int>(ncols_)) return false;
    if (used[static_cast<std::size_t>(col)]) return false;
    used[static_cast<std::size_t>(col)] = true;
  }
  basic_ = warm.basic;
  where_ = warm.where;
  for (std::size_t i = 0; i < m_; ++i) where_[static_cast<std::size_t>(basic_[i])] = InBasis;
  // Repair nonbasic states against the current bounds.
  for (std::size_t j = 0; j < ncols_; ++j) {
    if (where_[j] == InBasis) continue;
    if (where_[j] == AtLower && !std::isfinite(lo_[j]))
      where_[j] = std::isfinite(hi_[j]) ? AtUpper : FreeZero;
    if (where_[j] == AtUpper && !std::isfinite(hi_[j]))
      where_[j] = std::isfinite(lo_[j]) ? AtLower : FreeZero;
    if (where_[j] == FreeZero && (std::isfinite(lo_[j]) || std::isfinite(hi_[j])))
      where_[j] = std::isfinite(lo_[j]) ? AtLower : AtUpper;
  }
  return true;
}

bool Simplex::refactorize() {
  etas_.clear();
  if (m_ == 0) {
    lu_->ok = true;
    return true;
  }
  Eigen::SparseMatrix<double> B(static_cast<int>(m_), static_cast<int>(m_));
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < m_; ++i)
    for (const auto& [r, v] : cols_[static_cast<std::size_t>(basic_[i])])
      trips.emplace_back(r, static_cast<int>(i), v);
  B.setFromTriplets(trips.begin(), trips.end());
  lu_->lu.analyzePattern(B);
  lu_->lu.factorize(B);
  lu_->ok = (lu_->lu.info() == Eigen::Success);
  etas_.clear();
  return lu_->ok;
}

void Simplex::recompute_basics() {
  // x_B = B^-1 (rhs - N x_N)
  std::vector<double> v(rhs_);
  for (std::size_t j = 0; j < ncols_; ++j) {
    if (where_[j] == InBasis) continue;
    double xj = 0.0;
    if (where_[j] == AtLower)
      xj = lo_[j];
    else if (where_[j] == AtUpper)
      xj = hi_[j];
    if (xj != 0.0)
      for (const auto& [r, a] : cols_[j]) v[static_cast<std::size_t>(r)] -= a * xj;
    xval_[j] = xj;
  }
  ftran(v);
  for (std::size_t i = 0; i < m_; ++i) xval_[static_cast<std::size_t>(basic_[i])] = v[i];
}

void Simplex::ftran(std::vector<double>& v) const {
  if (m_ == 0) return;
  Eigen::Map<Eigen::VectorXd> mv(v.data(), static_cast<Eigen::Index>(m_));
  Eigen::VectorXd sol = lu_->lu.solve(mv);
  for (std::size_t i = 0; i < m_; ++i) v[i] = sol(static_cast<Eigen::Index>(i));
  for (const auto& eta : etas_) {
    const auto r = static_cast<std::size_t>(eta.pivot_row);
    const double t = v[r] / eta.pivot_value;
    if (t != 0.0)
      for (const auto& [i, a] : eta.column)
        if (i != eta.pivot_row) v[static_cast<std::size_t>(i)] -= a * t;
    v[r] = t;
  }
}

void Simplex::btran(std::vector<double>& v) const {
  if (m_ == 0) return;
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    const auto r = static_cast<std::size_t>(it->pivot_row);
    double sum = 0.0;
    for (const auto& [i, a] : it->column)
      if (i != it->pivot_row) sum += a * v[static_cast<std::size_t>(i)];
    v[r] = (v[r] - sum) / it->pivot_value;
  }
  Eigen::Map<Eigen::VectorXd> mv(v.data(), static_cast<Eigen::Index>(m_));
  Eigen::VectorXd sol = lu_->lu.adjoint().solve(mv);
  for (std::size_t i = 0; i < m_; ++i) v[i] = sol(static_cast<Eigen::Index>(i));
}

void Simplex::add_column(int col, double scale, std::vector<double>& dense) const {
  for (const auto& [r, v] : cols_[static_cast<std::size_t>(col)])
    dense[static_cast<std::size_t>(r)] += scale * v;
}

Simplex::Result Simplex::solve(const std::vector<double>* lo_override,
                               const std::vector<double>* hi_override,
                               const Basis* warm_start, long iteration_cap) {
  Result res;
  install_bounds(lo_override, hi_override);
  for (std::size_t j = 0; j < ncols_; ++j)
    if (lo_[j] > hi_[j] + 1e-12) {
      res.status = SolveStatus::Infeasible;
      return res;
    }

  xval_.assign(ncols_, 0.0);
  if (!warm_start || !adopt_basis(*warm_start)) default_basis();
  if (!refactorize()) {
    default_basis();
    if (!refactorize()) throw SolveError("simplex: singular initial basis");
  }
  recompute_basics();

  double cmax = 1.0;
  for (std::size_t j = 0; j < nstruct_; ++j) cmax = std::max(cmax, std::abs(cost_[j]));
  ctol_ = 1e-9 * cmax;

  std::vector<double> y(m_), phase_cost(ncols_), alpha(m_);
  long iterations = 0;
  int degenerate_streak = 0;
  const int bland_threshold = 40;

  auto basic_infeasibility = [&](std::size_t i) {
    const auto b = static_cast<std::size_t>(basic_[i]);
    const double t = feas_tol(basic_[i]);
    if (xval_[b] < lo_[b] - t) return -1; // below lower bound
    if (xval_[b] > hi_[b] + t) return +1; // above upper bound
    return 0;
  };

  while (true) {
    if (iterations >= iteration_cap) {
      res.status = SolveStatus::IterationLimit;
      break;
    }

    // Phase selection: composite phase-1 cost when any basic is out of bounds.
    bool phase1 = false;
    std::fill(phase_cost.begin(), phase_cost.end(), 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const int inf = basic_infeasibility(i);
      if (inf != 0) {
        phase1 = true;
        phase_cost[static_cast<std::size_t>(basic_[i])] = inf > 0 ? 1.0 : -1.0;
      }
    }
    const std::vector<double>& cc = phase1 ? phase_cost : cost_;
    const double dual_tol = phase1 ? 1e-9 : ctol_;

    // y = B^-T c_B
    for (std::size_t i = 0; i < m_; ++i) y[i] = cc[static_cast<std::size_t>(basic_[i])];
    btran(y);

    // Pricing. Dantzig by default, Bland when stalled.
    const bool bland = degenerate_streak > bland_threshold;
    int enter = -1, dir = 0;
    double best_score = dual_tol;
    for (std::size_t j = 0; j < ncols_; ++j) {
      if (where_[j] == InBasis) continue;
      if (lo_[j] == hi_[j] && std::isfinite(lo_[j])) continue; // fixed
      double d = cc[j];
      for (const auto& [r, a] : cols_[j]) d -= y[static_cast<std::size_t>(r)] * a;
      int cand_dir = 0;
      double score = 0.0;
      if (where_[j] == AtLower || where_[j] == FreeZero) {
        if (d < -dual_tol) {
          cand_dir = +1;
          score = -d;
        }
      }
      if (cand_dir == 0 && (where_[j] == AtUpper || where_[j] == FreeZero)) {
        if (d > dual_tol) {
          cand_dir = -1;
          score = d;
        }
      }
      if (cand_dir == 0) continue;
      if (bland) {
        enter = static_cast<int>(j);
        dir = cand_dir;
        break;
      }
      if (score > best_score) {
        best_score = score;
        enter = static_cast<int>(j);
        dir = cand_dir;
      }
    }

    if (enter < 0) {
      if (phase1) {
        res.status = SolveStatus::Infeasible;
        break;
      }
      res.status = SolveStatus::Optimal;
      break;
    }

    // alpha = B^-1 a_enter
    std::fill(alpha.begin(), alpha.end(), 0.0);
    add_column(enter, 1.0, alpha);
    ftran(alpha);

    // Ratio test. x_enter moves by t*dir (t >= 0); basic i moves at rate
    // -dir*alpha_i. In phase 1 infeasible basics block only at the violated
    // bound they are moving toward (the cost flip point).
    const auto je = static_cast<std::size_t>(enter);
    double t_block = kInf;
    int leave_pos = -1;        // row position of the blocking basic
    double leave_to_bound = 0; // bound the leaving variable lands on
    bool leave_at_lower = false;
    double best_pivot = 0.0;

    double t_flip = kInf;
    if (std::isfinite(lo_[je]) && std::isfinite(hi_[je])) t_flip = hi_[je] - lo_[je];

    for (std::size_t i = 0; i < m_; ++i) {
      const double rate = -static_cast<double>(dir) * alpha[i];
      if (std::abs(rate) < kPivTol) continue;
      const auto b = static_cast<std::size_t>(basic_[i]);
      const int inf = basic_infeasibility(i);
      double limit = kInf, target = 0.0;
      bool at_lower = false;
      if (rate > 0) {
        if (inf < 0) { // below lower, moving up: blocks at lower
          limit = (lo_[b] - xval_[b]) / rate;
          target = lo_[b];
          at_lower = true;
        } else if (inf == 0 && std::isfinite(hi_[b])) {
          limit = (hi_[b] - xval_[b]) / rate;
          target = hi_[b];
        }
      } else {
        if (inf > 0) { // above upper, moving down: blocks at upper
          limit = (hi_[b] - xval_[b]) / rate;
          target = hi_[b];
        } else if (inf == 0 && std::isfinite(lo_[b])) {
          limit = (lo_[b] - xval_[b]) / rate;
          target = lo_[b];
          at_lower = true;
        }
      }
      if (limit == kInf) continue;
      limit = std::max(limit, 0.0);
      const double piv = std::abs(alpha[i]);
      bool better = false;
      if (limit < t_block - 1e-12) {
        better = true;
      } else if (limit < t_block + 1e-12) {
        // Tie: Bland picks the smallest column index, default picks the
        // biggest pivot for stability.
        if (bland)
          better = leave_pos >= 0 && basic_[i] < basic_[static_cast<std::size_t>(leave_pos)];
        else
          better = piv > best_pivot;
      }
      if (better) {
        t_block = limit;
        leave_pos = static_cast<int>(i);
        leave_to_bound = target;
        leave_at_lower = at_lower;
        best_pivot = piv;
      }
    }

    ++iterations;

    if (t_flip <= t_block) {
      if (t_flip == kInf) {
        res.status = phase1 ? SolveStatus::Infeasible : SolveStatus::Unbounded;
        if (phase1)
          throw SolveError("simplex: phase-1 direction unbounded; numerical breakdown");
        break;
      }
      // Bound flip, no basis change.
      const double step = t_flip * dir;
      for (std::size_t i = 0; i < m_; ++i)
        xval_[static_cast<std::size_t>(basic_[i])] -= step * alpha[i];
      if (dir > 0) {
        xval_[je] = hi_[je];
        where_[je] = AtUpper;
      } else {
        xval_[je] = lo_[je];
        where_[je] = AtLower;
      }
      degenerate_streak = (t_flip < 1e-10) ? degenerate_streak + 1 : 0;
      continue;
    }

    if (leave_pos < 0) {
      res.status = SolveStatus::Unbounded;
      break;
    }

    // Pivot: enter becomes basic at row position leave_pos.
    const double step = t_block * dir;
    for (std::size_t i = 0; i < m_; ++i)
      xval_[static_cast<std::size_t>(basic_[i])] -= step * alpha[i];
    const double enter_start = (where_[je] == AtLower)   ? lo_[je]
                               : (where_[je] == AtUpper) ? hi_[je]
                                                         : 0.0;
    xval_[je] = enter_start + step;

    const auto lp = static_cast<std::size_t>(leave_pos);
    const auto leaving = static_cast<std::size_t>(basic_[lp]);
    xval_[leaving] = leave_to_bound;
    where_[leaving] = leave_at_lower ? AtLower : AtUpper;
    basic_[lp] = enter;
    where_[je] = InBasis;

    Eta eta;
    eta.pivot_row = leave_pos;
    eta.pivot_value = alpha[lp];
    for (std::size_t i = 0; i < m_; ++i)
      if (alpha[i] != 0.0) eta.column.push_back({static_cast<int>(i), alpha[i]});
    etas_.push_back(std::move(eta));

    degenerate_streak = (t_block < 1e-10) ? degenerate_streak + 1 : 0;

    if (static_cast<int>(etas_.size()) >= refactor_limit_) {
      if (!refactorize()) throw SolveError("simplex: singular basis after refactorization");
      recompute_basics();
    }
  }

  res.iterations = iterations;
  res.basis.basic = basic_;
  res.basis.where = where_;

  if (res.status == SolveStatus::Optimal) {
    // Clean recompute at the final basis for tight residuals.
    if (!etas_.empty()) {
      refactorize();
      recompute_basics();
    }
    res.x.assign(nstruct_, 0.0);
    for (std::size_t j = 0; j < nstruct_; ++j) res.x[j] = xval_[j];
    res.objective = 0.0;
    for (std::size_t j = 0; j < nstruct_; ++j) res.objective += cost_[j] * xval_[j];
    res.duals.assign(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i)
      res.duals[i] = cost_[static_cast<std::size_t>(basic_[i])];
    btran(res.duals);
    res.reduced_costs.assign(nstruct_, 0.0);
    for (std::size_t j = 0; j < nstruct_; ++j) {
      double d = cost_[j];
      for (const auto& [r, a] : cols_[j]) d -= res.duals[static_cast<std::size_t>(r)] * a;
      res.reduced_costs[j] = d;
    }
  }
  return res;
}

} // namespace iegs::milp
