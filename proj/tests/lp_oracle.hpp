#pragma once

// Test-only reference LP solver: textbook two-phase tableau simplex on the
// standard form min c'y, Ay = b, y >= 0, with Bland's rule throughout.

#include <cmath>
#include <vector>

#include "tship/milp.hpp"

namespace tship::oracle {

struct TextbookResult {
  bool feasible = false;
  bool bounded = true;
  double objective = 0.0;
};

inline TextbookResult textbook_simplex(const MilpModel& model) {
  const auto& vars = model.variables();
  // x_j = offset_j + sum_k map[j][k] * y_k
  struct Piece {
    int col;
    double coef;
  };
  std::vector<std::vector<Piece>> map(vars.size());
  std::vector<double> offset(vars.size(), 0.0);
  int ny = 0;
  std::vector<std::pair<int, double>> upper_rows;  // y_col <= value
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const auto& v = vars[j];
    if (std::isfinite(v.lo)) {
      offset[j] = v.lo;
      map[j].push_back({ny, 1.0});
      if (std::isfinite(v.hi)) upper_rows.emplace_back(ny, v.hi - v.lo);
      ++ny;
    } else if (std::isfinite(v.hi)) {
      offset[j] = v.hi;
      map[j].push_back({ny++, -1.0});
    } else {
      map[j].push_back({ny++, 1.0});
      map[j].push_back({ny++, -1.0});
    }
  }
  struct Row {
    std::vector<double> a;
    int sense;  // -1 <=, 0 =, +1 >=
    double b;
  };
  std::vector<Row> rows;
  for (const auto& c : model.constraints()) {
    Row r{std::vector<double>(static_cast<std::size_t>(ny), 0.0), 0, c.rhs};
    r.sense = c.sense == RowSense::LessEqual ? -1 : c.sense == RowSense::GreaterEqual ? 1 : 0;
    for (const auto& t : c.terms) {
      r.b -= t.coef * offset[static_cast<std::size_t>(t.var)];
      for (const auto& p : map[static_cast<std::size_t>(t.var)]) r.a[static_cast<std::size_t>(p.col)] += t.coef * p.coef;
    }
    rows.push_back(std::move(r));
  }
  for (const auto& [col, value] : upper_rows) {
    Row r{std::vector<double>(static_cast<std::size_t>(ny), 0.0), -1, value};
    r.a[static_cast<std::size_t>(col)] = 1.0;
    rows.push_back(std::move(r));
  }
  std::vector<double> cy(static_cast<std::size_t>(ny), 0.0);
  double c0 = model.objective_constant();
  for (std::size_t j = 0; j < vars.size(); ++j) {
    c0 += vars[j].cost * offset[j];
    for (const auto& p : map[j]) cy[static_cast<std::size_t>(p.col)] += vars[j].cost * p.coef;
  }
  for (auto& r : rows) {
    if (r.b < 0) {
      for (auto& a : r.a) a = -a;
      r.b = -r.b;
      r.sense = -r.sense;
    }
  }
  const int m = static_cast<int>(rows.size());
  int n_slack = 0;
  int n_art = 0;
  for (const auto& r : rows) {
    if (r.sense != 0) ++n_slack;
    if (r.sense >= 0) ++n_art;
  }
  const int n = ny + n_slack + n_art;
  std::vector<std::vector<double>> T(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
  std::vector<int> basis(static_cast<std::size_t>(m));
  int s = ny;
  int art = ny + n_slack;
  const int first_art = art;
  for (int i = 0; i < m; ++i) {
    auto& row = T[static_cast<std::size_t>(i)];
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (int k = 0; k < ny; ++k) row[static_cast<std::size_t>(k)] = r.a[static_cast<std::size_t>(k)];
    row[static_cast<std::size_t>(n)] = r.b;
    if (r.sense == -1) {
      row[static_cast<std::size_t>(s)] = 1.0;
      basis[static_cast<std::size_t>(i)] = s++;
    } else {
      if (r.sense == 1) row[static_cast<std::size_t>(s++)] = -1.0;
      row[static_cast<std::size_t>(art)] = 1.0;
      basis[static_cast<std::size_t>(i)] = art++;
    }
  }

  auto pivot = [&](int r, int q) {
    auto& prow = T[static_cast<std::size_t>(r)];
    const double pv = prow[static_cast<std::size_t>(q)];
    for (auto& v : prow) v /= pv;
    for (int i = 0; i < m; ++i) {
      if (i == r) continue;
      auto& row = T[static_cast<std::size_t>(i)];
      const double f = row[static_cast<std::size_t>(q)];
      if (f == 0.0) continue;
      for (int j = 0; j <= n; ++j) row[static_cast<std::size_t>(j)] -= f * prow[static_cast<std::size_t>(j)];
    }
    basis[static_cast<std::size_t>(r)] = q;
  };

  auto run = [&](const std::vector<double>& c, int allowed) {
    // returns false when unbounded
    while (true) {
      std::vector<double> d(c.begin(), c.begin() + n);
      for (int i = 0; i < m; ++i) {
        const double cb = c[static_cast<std::size_t>(basis[static_cast<std::size_t>(i)])];
        for (int j = 0; j < n; ++j) d[static_cast<std::size_t>(j)] -= cb * T[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      int q = -1;
      for (int j = 0; j < allowed; ++j) {
        if (d[static_cast<std::size_t>(j)] < -1e-10) {
          q = j;
          break;
        }
      }
      if (q < 0) return true;
      int r = -1;
      double best = 0.0;
      for (int i = 0; i < m; ++i) {
        const double a = T[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)];
        if (a <= 1e-11) continue;
        const double ratio = T[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)] / a;
        if (r < 0 || ratio < best - 1e-12 ||
            (ratio <= best + 1e-12 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(r)])) {
          r = i;
          best = ratio;
        }
      }
      if (r < 0) return false;
      pivot(r, q);
    }
  };

  TextbookResult out;
  std::vector<double> phase1(static_cast<std::size_t>(n), 0.0);
  for (int j = first_art; j < n; ++j) phase1[static_cast<std::size_t>(j)] = 1.0;
  run(phase1, n);
  double infeas = 0.0;
  for (int i = 0; i < m; ++i) {
    if (basis[static_cast<std::size_t>(i)] >= first_art) infeas += T[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)];
  }
  if (infeas > 1e-7) return out;
  out.feasible = true;
  // drive zero-valued artificials out of the basis; rows where that fails are redundant
  for (int i = 0; i < m; ++i) {
    if (basis[static_cast<std::size_t>(i)] < first_art) continue;
    for (int j = 0; j < first_art; ++j) {
      if (std::abs(T[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) > 1e-9) {
        pivot(i, j);
        break;
      }
    }
  }
  std::vector<double> phase2(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < ny; ++k) phase2[static_cast<std::size_t>(k)] = cy[static_cast<std::size_t>(k)];
  // artificials left in the basis sit at zero; they may not re-enter
  if (!run(phase2, first_art)) {
    out.bounded = false;
    return out;
  }
  double obj = c0;
  for (int i = 0; i < m; ++i) {
    const int b = basis[static_cast<std::size_t>(i)];
    if (b < ny) obj += cy[static_cast<std::size_t>(b)] * T[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)];
  }
  out.objective = obj;
  return out;
}

}  // namespace tship::oracle
