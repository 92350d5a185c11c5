#include "iegs/model.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "iegs/errors.hpp"

namespace iegs::milp {

int Model::add_var(const std::string& name, VarKind kind, double lo, double hi,
                   double obj_coeff) {
  if (index_.count(name)) throw DimensionError("duplicate variable '" + name + "'");
  if (kind == VarKind::Binary) {
    lo = std::max(lo, 0.0);
    hi = std::min(hi, 1.0);
  }
  Var v{name, kind, lo, hi};
  const int idx = static_cast<int>(vars.size());
  vars.push_back(v);
  obj.push_back(obj_coeff);
  index_[name] = idx;
  return idx;
}

int Model::add_row(const std::string& name, Sense sense, double rhs,
                   std::vector<std::pair<int, double>> coeffs) {
  for (const auto& [col, val] : coeffs) {
    if (col < 0 || col >= static_cast<int>(vars.size()))
      throw DimensionError("row '" + name + "' references unknown column");
    (void)val;
  }
  rows.push_back(Row{name, sense, rhs, std::move(coeffs)});
  return static_cast<int>(rows.size()) - 1;
}

int Model::var_index(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::size_t Model::num_binaries() const {
  std::size_t n = 0;
  for (const auto& v : vars)
    if (v.kind == VarKind::Binary) ++n;
  return n;
}

void Model::check_well_formed() const {
  if (obj.size() != vars.size()) throw DimensionError("objective length mismatch");
  for (const auto& v : vars) {
    if (v.lo > v.hi) throw DimensionError("variable '" + v.name + "' has empty bound box");
    if (v.kind == VarKind::Binary && (v.lo < 0.0 || v.hi > 1.0))
      throw DimensionError("binary '" + v.name + "' has bounds outside [0,1]");
  }
  for (const auto& r : rows)
    for (const auto& [col, val] : r.coeffs) {
      if (col < 0 || col >= static_cast<int>(vars.size()))
        throw DimensionError("row '" + r.name + "' references unknown column");
      if (!std::isfinite(val))
        throw DimensionError("row '" + r.name + "' has a non-finite coefficient");
    }
}

double Model::row_activity(const Row& row, const std::vector<double>& x) const {
  double a = 0.0;
  for (const auto& [col, val] : row.coeffs) a += val * x[static_cast<std::size_t>(col)];
  return a;
}

bool Model::is_feasible_point(const std::vector<double>& x, double tol) const {
  if (x.size() != vars.size()) return false;
  for (std::size_t j = 0; j < vars.size(); ++j) {
    if (x[j] < vars[j].lo - tol || x[j] > vars[j].hi + tol) return false;
    if (vars[j].kind == VarKind::Binary && std::abs(x[j] - std::round(x[j])) > tol) return false;
  }
  for (const auto& r : rows) {
    const double a = row_activity(r, x);
    const double scale = std::max(1.0, std::abs(r.rhs));
    switch (r.sense) {
      case Sense::LE:
        if (a > r.rhs + tol * scale) return false;
        break;
      case Sense::GE:
        if (a < r.rhs - tol * scale) return false;
        break;
      case Sense::EQ:
        if (std::abs(a - r.rhs) > tol * scale) return false;
        break;
    }
  }
  return true;
}

double Model::objective_value(const std::vector<double>& x) const {
  double v = obj_offset;
  for (std::size_t j = 0; j < vars.size(); ++j) v += obj[j] * x[j];
  return v;
}

void Model::export_sparse(std::ostream& os) const {
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  os << "problem " << (obj_sense == ObjSense::Min ? "min" : "max") << " " << vars.size() << " "
     << rows.size() << "\n";
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const auto& v = vars[j];
    os << "v " << j << " " << (v.kind == VarKind::Binary ? "b" : "c") << " " << fmt(v.lo) << " "
       << fmt(v.hi) << " " << fmt(obj[j]) << " " << v.name << "\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const char* sense = r.sense == Sense::LE ? "<=" : (r.sense == Sense::GE ? ">=" : "=");
    os << "c " << i << " " << sense << " " << fmt(r.rhs) << " " << r.name << "\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& [col, val] : rows[i].coeffs)
      os << "r " << i << " " << col << " " << fmt(val) << "\n";
}

} // namespace iegs::milp
