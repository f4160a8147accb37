#include "tship/milp.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>
#include <unistd.h>
#include <unordered_map>

#include "tship/errors.hpp"

namespace tship {

int MilpModel::add_variable(std::string name, double lo, double hi, double cost, VarKind kind) {
  if (lo > hi) throw ConfigError(fmt::format("variable {}: lower bound {} above upper bound {}", name, lo, hi));
  vars_.push_back({std::move(name), lo, hi, cost, kind});
  return static_cast<int>(vars_.size()) - 1;
}

int MilpModel::add_constraint(std::string name, std::vector<Term> terms, RowSense sense, double rhs) {
  for (const auto& t : terms) {
    if (t.var < 0 || t.var >= static_cast<int>(vars_.size())) throw ConfigError("constraint " + name + ": bad variable");
  }
  rows_.push_back({std::move(name), std::move(terms), sense, rhs});
  return static_cast<int>(rows_.size()) - 1;
}

std::vector<int> MilpModel::binaries() const {
  std::vector<int> out;
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    if (vars_[j].kind == VarKind::Binary) out.push_back(static_cast<int>(j));
  }
  return out;
}

int MilpModel::find(std::string_view name) const {
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    if (vars_[j].name == name) return static_cast<int>(j);
  }
  return -1;
}

double MilpModel::objective(const std::vector<double>& x) const {
  double v = constant_;
  for (std::size_t j = 0; j < vars_.size(); ++j) v += vars_[j].cost * x[j];
  return v;
}

double MilpModel::max_violation(const std::vector<double>& x) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    worst = std::max({worst, vars_[j].lo - x[j], x[j] - vars_[j].hi});
  }
  for (const auto& r : rows_) {
    double lhs = 0.0;
    for (const auto& t : r.terms) lhs += t.coef * x[static_cast<std::size_t>(t.var)];
    if (r.sense != RowSense::GreaterEqual) worst = std::max(worst, lhs - r.rhs);
    if (r.sense != RowSense::LessEqual) worst = std::max(worst, r.rhs - lhs);
  }
  return worst;
}

namespace {

std::string num(double x) { return fmt::format("{:.12g}", x); }

void write_terms(std::ostream& out, const std::vector<Term>& terms, const std::vector<Variable>& vars) {
  if (terms.empty()) {
    out << " 0 " << vars.front().name;
    return;
  }
  int on_line = 0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const double c = terms[k].coef;
    const std::string& name = vars[static_cast<std::size_t>(terms[k].var)].name;
    if (k == 0) {
      out << ' ' << (c < 0 ? "- " : "") << num(std::abs(c)) << ' ' << name;
    } else {
      out << ' ' << (c < 0 ? '-' : '+') << ' ' << num(std::abs(c)) << ' ' << name;
    }
    if (++on_line == 8 && k + 1 < terms.size()) {
      out << "\n   ";
      on_line = 0;
    }
  }
}

}  // namespace

void MilpModel::write_lp(std::ostream& out) const {
  std::vector<Term> obj;
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    if (vars_[j].cost != 0.0) obj.push_back({static_cast<int>(j), vars_[j].cost});
  }
  std::vector<Variable> vars = vars_;
  if (constant_ != 0.0) {
    vars.push_back({"obj_constant", 1.0, 1.0, constant_, VarKind::Continuous});
    obj.push_back({static_cast<int>(vars.size()) - 1, constant_});
  }
  out << "Minimize\n obj:";
  if (obj.empty()) {
    out << " 0 " << (vars.empty() ? std::string("x") : vars.front().name);
  } else {
    write_terms(out, obj, vars);
  }
  out << "\nSubject To\n";
  for (const auto& r : rows_) {
    out << ' ' << r.name << ':';
    write_terms(out, r.terms, vars);
    out << (r.sense == RowSense::LessEqual ? " <= " : r.sense == RowSense::GreaterEqual ? " >= " : " = ") << num(r.rhs)
        << '\n';
  }
  out << "Bounds\n";
  for (const auto& v : vars) {
    if (v.kind == VarKind::Binary) continue;
    const bool lo_inf = std::isinf(v.lo);
    const bool hi_inf = std::isinf(v.hi);
    if (lo_inf && hi_inf) {
      out << ' ' << v.name << " free\n";
    } else if (lo_inf) {
      out << " -inf <= " << v.name << " <= " << num(v.hi) << '\n';
    } else if (hi_inf) {
      out << ' ' << v.name << " >= " << num(v.lo) << '\n';
    } else if (v.lo == v.hi) {
      out << ' ' << v.name << " = " << num(v.lo) << '\n';
    } else {
      out << ' ' << num(v.lo) << " <= " << v.name << " <= " << num(v.hi) << '\n';
    }
  }
  bool any_binary = false;
  for (const auto& v : vars) {
    if (v.kind != VarKind::Binary) continue;
    if (!any_binary) out << "Binaries\n";
    any_binary = true;
    out << ' ' << v.name << '\n';
  }
  out << "End\n";
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterationLimit: return "iteration_limit";
    case SolveStatus::NodeLimit: return "node_limit";
    case SolveStatus::Error: return "error";
  }
  return "error";
}

namespace {

enum class At : unsigned char { Basic, Lower, Upper, Zero };

// Dense tableau B^-1 [A | I | artificials | b]; columns are structurals, one slack
// per row, then the artificials needed for phase one.
class Simplex {
 public:
  Simplex(const MilpModel& model, const std::vector<double>& lo, const std::vector<double>& hi,
          const SimplexOptions& options)
      : model_(&model), opt_(options) {
    n_ = static_cast<int>(lo.size());
    m_ = static_cast<int>(model.constraints().size());
    lo_ = lo;
    hi_ = hi;
    cost_.assign(static_cast<std::size_t>(n_), 0.0);
    for (int j = 0; j < n_; ++j) cost_[static_cast<std::size_t>(j)] = model.variables()[static_cast<std::size_t>(j)].cost;
    for (const auto& r : model.constraints()) {
      lo_.push_back(r.sense == RowSense::GreaterEqual ? -kInf : 0.0);
      hi_.push_back(r.sense == RowSense::LessEqual ? kInf : 0.0);
      cost_.push_back(0.0);
    }
    x_.assign(static_cast<std::size_t>(n_ + m_), 0.0);
    at_.assign(static_cast<std::size_t>(n_ + m_), At::Lower);
    for (int j = 0; j < n_; ++j) place_at_bound(j);

    // residual rows decide which need an artificial
    std::vector<double> resid(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) {
      const auto& r = model.constraints()[static_cast<std::size_t>(i)];
      double v = r.rhs;
      for (const auto& t : r.terms) v -= t.coef * x_[static_cast<std::size_t>(t.var)];
      resid[static_cast<std::size_t>(i)] = v;
    }
    std::vector<int> artificial_row;
    std::vector<double> sign(static_cast<std::size_t>(m_), 1.0);
    basis_.assign(static_cast<std::size_t>(m_), 0);
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      const double r = resid[static_cast<std::size_t>(i)];
      const double slo = lo_[static_cast<std::size_t>(s)];
      const double shi = hi_[static_cast<std::size_t>(s)];
      if (r >= slo - opt_.feasibility_tol && r <= shi + opt_.feasibility_tol) {
        basis_[static_cast<std::size_t>(i)] = s;
        at_[static_cast<std::size_t>(s)] = At::Basic;
        x_[static_cast<std::size_t>(s)] = r;
      } else {
        const bool below = r < slo;
        x_[static_cast<std::size_t>(s)] = below ? slo : shi;
        at_[static_cast<std::size_t>(s)] = below ? At::Lower : At::Upper;
        sign[static_cast<std::size_t>(i)] = (r - x_[static_cast<std::size_t>(s)]) >= 0 ? 1.0 : -1.0;
        artificial_row.push_back(i);
      }
    }
    n_art_ = static_cast<int>(artificial_row.size());
    cols_ = n_ + m_ + n_art_;
    stride_ = cols_ + 1;
    tab_.assign(static_cast<std::size_t>(m_) * static_cast<std::size_t>(stride_), 0.0);
    for (int i = 0; i < m_; ++i) {
      const auto& r = model.constraints()[static_cast<std::size_t>(i)];
      const double sg = sign[static_cast<std::size_t>(i)];
      for (const auto& t : r.terms) at(i, t.var) += sg * t.coef;
      at(i, n_ + i) = sg;
      at(i, cols_) = sg * r.rhs;
    }
    for (int k = 0; k < n_art_; ++k) {
      const int i = artificial_row[static_cast<std::size_t>(k)];
      const int c = n_ + m_ + k;
      at(i, c) = 1.0;
      lo_.push_back(0.0);
      hi_.push_back(kInf);
      cost_.push_back(0.0);
      const int s = n_ + i;
      x_.push_back(sign[static_cast<std::size_t>(i)] * (resid[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(s)]));
      at_.push_back(At::Basic);
      basis_[static_cast<std::size_t>(i)] = c;
    }
    max_iter_ = opt_.max_iterations > 0 ? opt_.max_iterations : 50L * (m_ + cols_) + 1000;
  }

  LpSolution run() {
    LpSolution out;
    if (n_art_ > 0) {
      std::vector<double> phase1(static_cast<std::size_t>(cols_), 0.0);
      for (int k = 0; k < n_art_; ++k) phase1[static_cast<std::size_t>(n_ + m_ + k)] = 1.0;
      const SolveStatus s = iterate(phase1);
      out.iterations = iterations_;
      if (s == SolveStatus::IterationLimit) {
        out.status = s;
        return out;
      }
      double infeas = 0.0;
      double scale = 1.0;
      for (int k = 0; k < n_art_; ++k) infeas += x_[static_cast<std::size_t>(n_ + m_ + k)];
      for (const auto& r : model_->constraints()) scale = std::max(scale, std::abs(r.rhs));
      if (infeas > 1e-7 * scale) {
        out.status = SolveStatus::Infeasible;
        return out;
      }
      for (int k = 0; k < n_art_; ++k) {
        const auto c = static_cast<std::size_t>(n_ + m_ + k);
        hi_[c] = 0.0;
        if (at_[c] != At::Basic) {
          x_[c] = 0.0;
          at_[c] = At::Lower;
        }
      }
    }
    return finish(iterate(cost_));
  }

  /// Re-solve after fixing variable j at v, starting from this optimal basis.
  LpSolution fix(int j, double v) {
    const auto u = static_cast<std::size_t>(j);
    if (v < lo_[u] - opt_.feasibility_tol || v > hi_[u] + opt_.feasibility_tol) {
      return {SolveStatus::Infeasible, kInf, {}, iterations_};
    }
    iterations_ = 0;
    lo_[u] = hi_[u] = v;
    if (at_[u] != At::Basic) {
      const double delta = v - x_[u];
      for (int i = 0; i < m_; ++i) {
        const double a = at(i, j);
        if (a != 0.0) x_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] -= a * delta;
      }
      x_[u] = v;
      at_[u] = At::Lower;
    }
    const SolveStatus s = dual_iterate();
    if (s != SolveStatus::Optimal) return {s, kInf, {}, iterations_};
    return finish(iterate(cost_));
  }

  [[nodiscard]] std::size_t bytes() const { return tab_.size() * sizeof(double); }

 private:
  LpSolution finish(SolveStatus s) {
    LpSolution out;
    out.iterations = iterations_;
    out.status = s;
    if (s != SolveStatus::Optimal) return out;
    out.x.assign(x_.begin(), x_.begin() + n_);
    for (int j = 0; j < n_; ++j) {
      auto& v = out.x[static_cast<std::size_t>(j)];
      v = std::clamp(v, lo_[static_cast<std::size_t>(j)], hi_[static_cast<std::size_t>(j)]);
    }
    out.objective = model_->objective(out.x);
    return out;
  }

  // Bounded dual simplex: the basis stays dual feasible while primal bound
  // violations are removed one leaving row at a time.
  SolveStatus dual_iterate() {
    reduced_costs(cost_);
    const double ftol = opt_.feasibility_tol;
    long since_refresh = 0;
    while (true) {
      if (++iterations_ > max_iter_) return SolveStatus::IterationLimit;
      if (++since_refresh >= 100) {
        reduced_costs(cost_);
        refresh_basic_values();
        since_refresh = 0;
      }
      int r = -1;
      double worst = ftol;
      bool below = false;
      for (int i = 0; i < m_; ++i) {
        const auto b = static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)]);
        if (lo_[b] - x_[b] > worst) {
          worst = lo_[b] - x_[b];
          r = i;
          below = true;
        } else if (x_[b] - hi_[b] > worst) {
          worst = x_[b] - hi_[b];
          r = i;
          below = false;
        }
      }
      if (r < 0) return SolveStatus::Optimal;
      // moving nonbasic j by delta changes the leaving basic by -T_rj * delta
      int q = -1;
      double best_ratio = kInf;
      double best_abs = 0.0;
      for (int j = 0; j < cols_; ++j) {
        const auto u = static_cast<std::size_t>(j);
        if (at_[u] == At::Basic || lo_[u] == hi_[u]) continue;
        const double a = at(r, j);
        if (std::abs(a) < 1e-9) continue;
        const double delta_sign = (below ? -1.0 : 1.0) * (a > 0 ? 1.0 : -1.0);
        if (at_[u] == At::Lower && delta_sign < 0) continue;
        if (at_[u] == At::Upper && delta_sign > 0) continue;
        const double ratio = std::abs(d_[u]) / std::abs(a);
        if (ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && std::abs(a) > best_abs)) {
          best_ratio = ratio;
          best_abs = std::abs(a);
          q = j;
        }
      }
      if (q < 0) return SolveStatus::Infeasible;
      const auto leaving = static_cast<std::size_t>(basis_[static_cast<std::size_t>(r)]);
      const double target = below ? lo_[leaving] : hi_[leaving];
      const double delta = (x_[leaving] - target) / at(r, q);
      for (int i = 0; i < m_; ++i) {
        const double a = at(i, q);
        if (a != 0.0) x_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] -= a * delta;
      }
      const auto uq = static_cast<std::size_t>(q);
      x_[uq] += delta;
      x_[leaving] = target;
      at_[leaving] = below ? At::Lower : At::Upper;
      pivot(r, q);
      basis_[static_cast<std::size_t>(r)] = q;
      at_[uq] = At::Basic;
    }
  }


  double& at(int i, int j) {
    return tab_[static_cast<std::size_t>(i) * static_cast<std::size_t>(stride_) + static_cast<std::size_t>(j)];
  }

  void place_at_bound(int j) {
    const auto u = static_cast<std::size_t>(j);
    if (std::isfinite(lo_[u])) {
      x_[u] = lo_[u];
      at_[u] = At::Lower;
    } else if (std::isfinite(hi_[u])) {
      x_[u] = hi_[u];
      at_[u] = At::Upper;
    } else {
      x_[u] = 0.0;
      at_[u] = At::Zero;
    }
  }

  void reduced_costs(const std::vector<double>& c) {
    d_.assign(static_cast<std::size_t>(cols_), 0.0);
    for (int j = 0; j < cols_; ++j) d_[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j)];
    for (int i = 0; i < m_; ++i) {
      const double cb = c[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])];
      if (cb == 0.0) continue;
      const double* row = &tab_[static_cast<std::size_t>(i) * static_cast<std::size_t>(stride_)];
      for (int j = 0; j < cols_; ++j) d_[static_cast<std::size_t>(j)] -= cb * row[j];
    }
    for (int i = 0; i < m_; ++i) d_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] = 0.0;
  }

  // x_B = B^-1 b - B^-1 N x_N, from the transformed right-hand side column
  void refresh_basic_values() {
    for (int i = 0; i < m_; ++i) {
      const double* row = &tab_[static_cast<std::size_t>(i) * static_cast<std::size_t>(stride_)];
      double v = row[cols_];
      for (int j = 0; j < cols_; ++j) {
        if (at_[static_cast<std::size_t>(j)] != At::Basic && row[j] != 0.0) v -= row[j] * x_[static_cast<std::size_t>(j)];
      }
      x_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] = v;
    }
  }

  int choose_entering(bool bland) const {
    int best = -1;
    double best_score = 0.0;
    const double tol = opt_.optimality_tol;
    for (int j = 0; j < cols_; ++j) {
      const auto u = static_cast<std::size_t>(j);
      if (at_[u] == At::Basic || lo_[u] == hi_[u]) continue;
      const double dj = d_[u];
      bool ok = false;
      switch (at_[u]) {
        case At::Lower: ok = dj < -tol; break;
        case At::Upper: ok = dj > tol; break;
        case At::Zero: ok = std::abs(dj) > tol; break;
        case At::Basic: break;
      }
      if (!ok) continue;
      if (bland) return j;
      if (std::abs(dj) > best_score) {
        best_score = std::abs(dj);
        best = j;
      }
    }
    return best;
  }

  void pivot(int r, int q) {
    double* prow = &tab_[static_cast<std::size_t>(r) * static_cast<std::size_t>(stride_)];
    const double inv = 1.0 / prow[q];
    for (int j = 0; j <= cols_; ++j) prow[j] *= inv;
    prow[q] = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &tab_[static_cast<std::size_t>(i) * static_cast<std::size_t>(stride_)];
      const double f = row[q];
      if (f == 0.0) continue;
      for (int j = 0; j <= cols_; ++j) {
        if (prow[j] != 0.0) row[j] -= f * prow[j];
      }
      row[q] = 0.0;
    }
    const double fd = d_[static_cast<std::size_t>(q)];
    if (fd != 0.0) {
      for (int j = 0; j < cols_; ++j) {
        if (prow[j] != 0.0) d_[static_cast<std::size_t>(j)] -= fd * prow[j];
      }
      d_[static_cast<std::size_t>(q)] = 0.0;
    }
  }

  SolveStatus iterate(const std::vector<double>& c) {
    reduced_costs(c);
    int degenerate = 0;
    long since_refresh = 0;
    const double ftol = opt_.feasibility_tol;
    const double ptol = 1e-9;
    while (true) {
      if (++iterations_ > max_iter_) return SolveStatus::IterationLimit;
      if (++since_refresh >= 100) {
        reduced_costs(c);
        refresh_basic_values();
        since_refresh = 0;
      }
      const bool bland = degenerate > 50;
      const int q = choose_entering(bland);
      if (q < 0) return SolveStatus::Optimal;
      const auto uq = static_cast<std::size_t>(q);
      double dir = 1.0;
      if (at_[uq] == At::Upper || (at_[uq] == At::Zero && d_[uq] > 0)) dir = -1.0;

      const double flip = hi_[uq] - lo_[uq];
      // Harris pass one: largest step keeping basics within tolerance-relaxed bounds
      double relaxed = kInf;
      for (int i = 0; i < m_; ++i) {
        const double a = dir * at(i, q);
        const auto b = static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)]);
        if (a > ptol && std::isfinite(lo_[b])) {
          relaxed = std::min(relaxed, (x_[b] - lo_[b] + ftol) / a);
        } else if (a < -ptol && std::isfinite(hi_[b])) {
          relaxed = std::min(relaxed, (hi_[b] - x_[b] + ftol) / -a);
        }
      }
      if (std::isinf(relaxed) && std::isinf(flip)) return SolveStatus::Unbounded;
      // pass two: among rows within the relaxed step, the largest pivot
      int r = -1;
      double theta = kInf;
      double best_pivot = 0.0;
      int best_basis = 0;
      for (int i = 0; i < m_; ++i) {
        const double a = dir * at(i, q);
        const auto b = static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)]);
        double ratio;
        if (a > ptol && std::isfinite(lo_[b])) {
          ratio = (x_[b] - lo_[b]) / a;
        } else if (a < -ptol && std::isfinite(hi_[b])) {
          ratio = (hi_[b] - x_[b]) / -a;
        } else {
          continue;
        }
        if (ratio > relaxed) continue;
        const bool better = bland ? (r < 0 || basis_[static_cast<std::size_t>(i)] < best_basis)
                                  : std::abs(a) > best_pivot;
        if (better) {
          r = i;
          best_pivot = std::abs(a);
          best_basis = basis_[static_cast<std::size_t>(i)];
          theta = std::max(0.0, ratio);
        }
      }
      if (r < 0 || flip <= theta) {
        // bound flip of the entering variable, no basis change
        theta = flip;
        for (int i = 0; i < m_; ++i) {
          const double a = at(i, q);
          if (a != 0.0) x_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] -= dir * theta * a;
        }
        if (dir > 0) {
          x_[uq] = hi_[uq];
          at_[uq] = At::Upper;
        } else {
          x_[uq] = lo_[uq];
          at_[uq] = At::Lower;
        }
        degenerate = 0;
        continue;
      }
      for (int i = 0; i < m_; ++i) {
        const double a = at(i, q);
        if (a != 0.0) x_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] -= dir * theta * a;
      }
      x_[uq] += dir * theta;
      const auto leaving = static_cast<std::size_t>(basis_[static_cast<std::size_t>(r)]);
      if (dir * at(r, q) > 0) {
        x_[leaving] = lo_[leaving];
        at_[leaving] = At::Lower;
      } else {
        x_[leaving] = hi_[leaving];
        at_[leaving] = At::Upper;
      }
      pivot(r, q);
      basis_[static_cast<std::size_t>(r)] = q;
      at_[uq] = At::Basic;
      degenerate = theta < 1e-12 ? degenerate + 1 : 0;
    }
  }

  const MilpModel* model_;
  SimplexOptions opt_;
  int n_ = 0;
  int m_ = 0;
  int n_art_ = 0;
  int cols_ = 0;
  int stride_ = 0;
  long iterations_ = 0;
  long max_iter_ = 0;
  std::vector<double> tab_;
  std::vector<double> lo_, hi_, cost_, x_, d_;
  std::vector<At> at_;
  std::vector<int> basis_;
};

}  // namespace

LpSolution solve_lp(const MilpModel& model, const std::vector<double>& lo, const std::vector<double>& hi,
                    const SimplexOptions& options) {
  const std::size_t n = model.variables().size();
  if (lo.size() != n || hi.size() != n) throw ConfigError("solve_lp: bound vectors do not match the model");
  for (std::size_t j = 0; j < n; ++j) {
    if (lo[j] > hi[j]) return {SolveStatus::Infeasible, kInf, {}, 0};
  }
  if (n == 0) {
    for (const auto& r : model.constraints()) {
      const bool ok = r.sense == RowSense::LessEqual ? 0.0 <= r.rhs
                      : r.sense == RowSense::GreaterEqual ? 0.0 >= r.rhs
                                                          : r.rhs == 0.0;
      if (!ok) return {SolveStatus::Infeasible, kInf, {}, 0};
    }
    return {SolveStatus::Optimal, model.objective_constant(), {}, 0};
  }
  Simplex s(model, lo, hi, options);
  return s.run();
}

LpSolution solve_lp(const MilpModel& model, const SimplexOptions& options) {
  std::vector<double> lo;
  std::vector<double> hi;
  for (const auto& v : model.variables()) {
    lo.push_back(v.lo);
    hi.push_back(v.hi);
  }
  return solve_lp(model, lo, hi, options);
}

namespace {

struct Node {
  double bound = 0.0;
  long id = -1;
  std::vector<std::pair<int, double>> fixings;  // binary index, fixed value
  int var = -1;                                 // branching variable leading here
  double step = 0.0;                            // its distance moved from the parent LP value
  std::shared_ptr<const Simplex> start;  // parent's final tableau, when kept
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

constexpr double kIntegrality = 1e-6;

}  // namespace

MilpSolution branch_and_bound(const MilpModel& model, const BranchAndBoundOptions& options) {
  MilpSolution out;
  const auto binaries = model.binaries();
  std::vector<double> base_lo;
  std::vector<double> base_hi;
  for (const auto& v : model.variables()) {
    base_lo.push_back(v.lo);
    base_hi.push_back(v.hi);
  }
  auto prune_level = [&](double incumbent) {
    return incumbent - options.relative_gap * std::max(1.0, std::abs(incumbent));
  };

  auto solve_node = [&](const std::vector<std::pair<int, double>>& fixings) {
    std::vector<double> lo = base_lo;
    std::vector<double> hi = base_hi;
    for (const auto& [j, v] : fixings) lo[static_cast<std::size_t>(j)] = hi[static_cast<std::size_t>(j)] = v;
    ++out.lp_solves;
    return solve_lp(model, lo, hi, options.lp);
  };

  // Children start from their parent's final tableau with a dual simplex
  // instead of a cold primal solve. Kept tableaux share a memory budget.
  constexpr std::size_t kWarmBudget = std::size_t{512} << 20;
  std::size_t warm_bytes = 0;
  auto solve_tree_node = [&](const Node& node) -> std::pair<LpSolution, std::unique_ptr<Simplex>> {
    ++out.lp_solves;
    if (node.start) {
      auto s = std::make_unique<Simplex>(*node.start);
      const auto& [j, v] = node.fixings.back();
      LpSolution lp = s->fix(j, v);
      if (lp.status == SolveStatus::Optimal || lp.status == SolveStatus::Infeasible) return {std::move(lp), std::move(s)};
    }
    std::vector<double> lo = base_lo;
    std::vector<double> hi = base_hi;
    for (const auto& [j, v] : node.fixings) {
      if (v < lo[static_cast<std::size_t>(j)] || v > hi[static_cast<std::size_t>(j)]) {
        return {LpSolution{SolveStatus::Infeasible, kInf, {}, 0}, nullptr};
      }
      lo[static_cast<std::size_t>(j)] = hi[static_cast<std::size_t>(j)] = v;
    }
    auto s = std::make_unique<Simplex>(model, lo, hi, options.lp);
    LpSolution lp = s->run();
    return {std::move(lp), std::move(s)};
  };
  auto keep_warm = [&](std::unique_ptr<Simplex> s) -> std::shared_ptr<const Simplex> {
    if (!s || warm_bytes + s->bytes() > kWarmBudget) return nullptr;
    warm_bytes += s->bytes();
    return std::shared_ptr<const Simplex>(s.release(), [&warm_bytes](const Simplex* p) {
      warm_bytes -= p->bytes();
      delete p;
    });
  };

  auto most_fractional = [&](const std::vector<double>& x) {
    int best = -1;
    double best_dist = kIntegrality;
    for (int j : binaries) {
      const double f = x[static_cast<std::size_t>(j)] - std::floor(x[static_cast<std::size_t>(j)]);
      const double dist = std::min(f, 1.0 - f);
      if (dist > best_dist + 1e-12) {
        best_dist = dist;
        best = j;
      }
    }
    return best;
  };

  auto accept = [&](const LpSolution& lp) {
    if (lp.objective < out.objective) {
      out.objective = lp.objective;
      out.x = lp.x;
      for (int j : binaries) out.x[static_cast<std::size_t>(j)] = std::round(out.x[static_cast<std::size_t>(j)]);
    }
  };

  // round every positive binary up and re-solve the continuous part
  auto rounding_heuristic = [&](const LpSolution& lp) {
    std::vector<std::pair<int, double>> fix;
    for (int j : binaries) fix.emplace_back(j, lp.x[static_cast<std::size_t>(j)] > kIntegrality ? 1.0 : 0.0);
    const auto r = solve_node(fix);
    if (r.status == SolveStatus::Optimal) accept(r);
  };

  auto [root, root_simplex] = solve_tree_node(Node{0.0, -1, {}});
  if (root.status != SolveStatus::Optimal) {
    out.status = root.status;
    return out;
  }
  out.bound = root.objective;
  if (most_fractional(root.x) < 0) {
    accept(root);
    out.status = SolveStatus::Optimal;
    return out;
  }
  rounding_heuristic(root);

  // pseudo-costs: mean objective change per unit move, per binary and direction
  std::vector<std::array<double, 2>> pc_sum(model.variables().size(), {0.0, 0.0});
  std::vector<std::array<int, 2>> pc_n(model.variables().size(), {0, 0});
  std::array<double, 2> all_sum{0.0, 0.0};
  std::array<int, 2> all_n{0, 0};
  auto record = [&](const Node& node, double objective) {
    if (node.var < 0 || node.step < kIntegrality) return;
    const int dir = node.fixings.back().second > 0.5 ? 1 : 0;
    const double gain = std::max(0.0, objective - node.bound) / node.step;
    pc_sum[static_cast<std::size_t>(node.var)][static_cast<std::size_t>(dir)] += gain;
    ++pc_n[static_cast<std::size_t>(node.var)][static_cast<std::size_t>(dir)];
    all_sum[static_cast<std::size_t>(dir)] += gain;
    ++all_n[static_cast<std::size_t>(dir)];
  };
  auto choose_branch = [&](const std::vector<double>& x) {
    if (options.branching == BranchRule::MostFractional) return most_fractional(x);
    int best = -1;
    double best_score = -1.0;
    for (int j : binaries) {
      const double v = x[static_cast<std::size_t>(j)];
      const double f = v - std::floor(v);
      if (std::min(f, 1.0 - f) <= kIntegrality) continue;
      double unit[2];
      for (int d = 0; d < 2; ++d) {
        const auto ud = static_cast<std::size_t>(d);
        const int n = pc_n[static_cast<std::size_t>(j)][ud];
        unit[d] = n > 0 ? pc_sum[static_cast<std::size_t>(j)][ud] / n : (all_n[ud] > 0 ? all_sum[ud] / all_n[ud] : 1.0);
      }
      const double score = std::max(unit[0] * f, 1e-6) * std::max(unit[1] * (1.0 - f), 1e-6);
      if (score > best_score * (1.0 + 1e-12)) {
        best_score = score;
        best = j;
      }
    }
    return best;
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long next_id = 0;
  // Plunge: the child on the rounding side of the LP value is solved next while
  // its parent tableau is hot; the sibling waits in the queue.
  std::optional<Node> plunge;
  auto branch = [&](const Node& parent, const LpSolution& lp, std::unique_ptr<Simplex> tableau) {
    const auto start = keep_warm(std::move(tableau));
    const int j = choose_branch(lp.x);
    const double f = lp.x[static_cast<std::size_t>(j)];
    const double near = f >= 0.5 ? 1.0 : 0.0;
    for (double v : {0.0, 1.0}) {
      Node child{lp.objective, next_id++, parent.fixings, j, std::abs(v - f), start};
      child.fixings.emplace_back(j, v);
      if (v == near) {
        plunge = std::move(child);
      } else {
        open.push(std::move(child));
      }
    }
  };
  branch(Node{root.objective, -1, {}}, root, std::move(root_simplex));

  while (plunge || !open.empty()) {
    Node node;
    if (plunge) {
      node = std::move(*plunge);
      plunge.reset();
      if (std::isfinite(out.objective) && node.bound >= prune_level(out.objective)) continue;
    } else {
      node = open.top();
      open.pop();
      if (std::isfinite(out.objective) && node.bound >= prune_level(out.objective)) {
        // best-first: every remaining node is at least as bad
        out.bound = out.objective;
        out.status = SolveStatus::Optimal;
        return out;
      }
    }
    if (out.nodes >= options.node_limit) {
      out.bound = open.empty() ? node.bound : std::min(node.bound, open.top().bound);
      out.status = SolveStatus::NodeLimit;
      return out;
    }
    ++out.nodes;
    auto [lp, simplex] = solve_tree_node(node);
    if (lp.status == SolveStatus::Infeasible) continue;
    if (lp.status != SolveStatus::Optimal) {
      out.status = lp.status;
      return out;
    }
    record(node, lp.objective);
    if (std::isfinite(out.objective) && lp.objective >= prune_level(out.objective)) continue;
    if (most_fractional(lp.x) < 0) {
      accept(lp);
      continue;
    }
    if ((out.nodes & (out.nodes - 1)) == 0) rounding_heuristic(lp);
    node.start.reset();
    branch(node, lp, std::move(simplex));
  }
  out.status = std::isfinite(out.objective) ? SolveStatus::Optimal : SolveStatus::Infeasible;
  out.bound = out.objective;
  return out;
}

MilpSolution ExternalBackend::solve(const MilpModel& model) const {
  static std::atomic<long> counter{0};
  namespace fs = std::filesystem;
  const std::string stem = fmt::format("tship_{}_{}", ::getpid(), counter++);
  const fs::path lp_path = fs::temp_directory_path() / (stem + ".lp");
  const fs::path sol_path = fs::temp_directory_path() / (stem + ".sol");
  {
    std::ofstream f(lp_path);
    model.write_lp(f);
  }
  std::string cmd = command_;
  for (const auto& [key, value] : {std::pair<std::string, std::string>{"{lp}", lp_path.string()},
                                   std::pair<std::string, std::string>{"{sol}", sol_path.string()}}) {
    for (auto pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + value.size())) {
      cmd.replace(pos, key.size(), value);
    }
  }
  MilpSolution out;
  const int rc = std::system(cmd.c_str());
  std::ifstream in(sol_path);
  std::string word;
  std::string status;
  if (rc != 0 || !(in >> word >> status) || word != "status") {
    out.status = SolveStatus::Error;
  } else if (status == "infeasible") {
    out.status = SolveStatus::Infeasible;
  } else if (status == "unbounded") {
    out.status = SolveStatus::Unbounded;
  } else if (status == "optimal") {
    std::unordered_map<std::string, int> index;
    for (std::size_t j = 0; j < model.variables().size(); ++j) index[model.variables()[j].name] = static_cast<int>(j);
    out.x.assign(model.variables().size(), 0.0);
    std::string name;
    double value = 0.0;
    while (in >> name >> value) {
      const auto it = index.find(name);
      if (it != index.end()) out.x[static_cast<std::size_t>(it->second)] = value;
    }
    out.objective = model.objective(out.x);
    out.bound = out.objective;
    out.status = SolveStatus::Optimal;
  } else {
    out.status = SolveStatus::Error;
  }
  in.close();
  std::error_code ec;
  fs::remove(lp_path, ec);
  fs::remove(sol_path, ec);
  return out;
}

}  // namespace tship
