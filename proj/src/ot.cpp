#include "gbip/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gbip/errors.hpp"
#include "gbip/kernels.hpp"

namespace gbip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCertificateTol = 1e-9;

double cost_scale(const Eigen::MatrixXd& cost) {
  return 1.0 + (cost.size() ? cost.cwiseAbs().maxCoeff() : 0.0);
}

}  // namespace

AssignmentSolution solve_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  if (n == 0 || n > m) throw ValidationError("assignment: need 1 <= rows <= cols");
  if (!cost.allFinite()) throw ValidationError("assignment: costs must be finite");

  // Row-major copy so each row is contiguous for the relax kernel.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = cost;

  // 1-based rows and columns; column 0 is a dummy holding the row being inserted.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0);
  std::vector<std::int64_t> way(m + 1, 0), used(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = -1;
      const std::size_t i0 = p[j0];
      const auto best = kernels::assignment_relax(
          {c.data() + (i0 - 1) * m, m}, u[i0], {v.data() + 1, m}, {minv.data() + 1, m},
          {way.data() + 1, m}, {used.data() + 1, m}, static_cast<std::int64_t>(j0));
      const double delta = best.delta;
      const std::size_t j1 = best.column + 1;
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const auto j1 = static_cast<std::size_t>(way[j0]);
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentSolution out;
  out.assignment.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) out.assignment[p[j] - 1] = j - 1;
  out.row_dual.assign(u.begin() + 1, u.end());
  out.col_dual.assign(v.begin() + 1, v.end());
  for (std::size_t i = 0; i < n; ++i) {
    out.cost += c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.assignment[i]));
    for (std::size_t j = 0; j < m; ++j) {
      const double viol = out.row_dual[i] + out.col_dual[j] -
                          c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out.dual_violation = std::max(out.dual_violation, viol);
    }
  }
  return out;
}

OtSolution solve_transport(std::span<const double> a, std::span<const double> b,
                           const Eigen::MatrixXd& cost) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) throw ValidationError("transport: empty marginal");
  if (cost.rows() != static_cast<Eigen::Index>(n) || cost.cols() != static_cast<Eigen::Index>(m)) {
    throw ValidationError("transport: cost matrix shape does not match the marginals");
  }
  const double ta = std::accumulate(a.begin(), a.end(), 0.0);
  const double tb = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::fabs(ta - tb) > 1e-9 * std::max(1.0, ta)) {
    throw ValidationError("transport: marginals have different total mass");
  }
  for (double x : a) if (!(x >= 0.0)) throw ValidationError("transport: negative weight");
  for (double x : b) if (!(x >= 0.0)) throw ValidationError("transport: negative weight");
  if (!cost.allFinite()) throw ValidationError("transport: costs must be finite");

  const double mass_eps = 1e-14 * std::max(1.0, ta);
  const double shift = cost.minCoeff();  // keeps initial reduced costs non-negative
  std::vector<double> supply(a.begin(), a.end()), demand(b.begin(), b.end());
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                               static_cast<Eigen::Index>(m));
  // Nodes: rows [0, n), columns [n, n + m), source S = n + m, sink T = n + m + 1.
  // Residual edges: S->i (remaining supply), i->j (uncapacitated, c_ij),
  // j->i (flow_ij, -c_ij), j->T (remaining demand). Dijkstra on reduced costs
  // c + pi_from - pi_to, which stay non-negative.
  const std::size_t S = n + m, T = n + m + 1, V = n + m + 2;
  std::vector<double> pi(V, 0.0), dist(V);
  std::vector<std::ptrdiff_t> prev(V);
  std::vector<char> done(V);
  auto c = [&](std::size_t i, std::size_t j) {
    return cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - shift;
  };
  auto relax = [&](std::size_t from, std::size_t to, double edge_cost) {
    if (done[to]) return;
    const double nd = dist[from] + std::max(0.0, edge_cost + pi[from] - pi[to]);
    if (nd < dist[to]) {
      dist[to] = nd;
      prev[to] = static_cast<std::ptrdiff_t>(from);
    }
  };
  double remaining = ta;
  for (std::size_t iter = 0; remaining > 1e-12 * std::max(1.0, ta); ++iter) {
    if (iter > 4 * (n + m) * (n + m) + 16) throw NumericalError("transport: augmentation limit hit");
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[S] = 0.0;
    for (;;) {
      std::size_t x = V;
      for (std::size_t k = 0; k < V; ++k)
        if (!done[k] && dist[k] < kInf && (x == V || dist[k] < dist[x])) x = k;
      if (x == V || x == T) break;
      done[x] = 1;
      if (x == S) {
        for (std::size_t i = 0; i < n; ++i)
          if (supply[i] > mass_eps) relax(S, i, 0.0);
      } else if (x < n) {
        for (std::size_t j = 0; j < m; ++j) relax(x, n + j, c(x, j));
      } else {
        const std::size_t j = x - n;
        if (demand[j] > mass_eps) relax(x, T, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          if (flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0)
            relax(x, i, -c(i, j));
      }
    }
    if (dist[T] == kInf) throw NumericalError("transport: no augmenting path");
    const double dsink = dist[T];
    for (std::size_t k = 0; k < V; ++k) pi[k] += std::min(dist[k], dsink);

    double push = kInf;
    for (std::size_t x = T; x != S;) {
      const auto p = static_cast<std::size_t>(prev[x]);
      if (x == T) push = std::min(push, demand[p - n]);
      else if (p == S) push = std::min(push, supply[x]);
      else if (p >= n) push = std::min(push, flow(static_cast<Eigen::Index>(x),
                                                  static_cast<Eigen::Index>(p - n)));
      x = p;
    }
    for (std::size_t x = T; x != S;) {
      const auto p = static_cast<std::size_t>(prev[x]);
      if (x == T) {
        demand[p - n] -= push;
      } else if (p == S) {
        supply[x] -= push;
      } else if (p < n) {
        flow(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(x - n)) += push;
      } else {
        double& f = flow(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(p - n));
        f -= push;
        if (f < mass_eps) f = 0.0;
      }
      x = p;
    }
    remaining -= push;
  }

  OtSolution out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double f = flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (f > 0.0) {
        out.plan.push_back({i, j, f});
        out.cost += f * cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  // Dual from the potentials: u_i + v_j <= c_ij with u_i = -pi_i, v_j = pi_j
  // (+ the cost shift on the rows).
  out.row_dual.resize(n);
  out.col_dual.resize(m);
  double dual = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.row_dual[i] = -pi[i] + shift;
    dual += a[i] * out.row_dual[i];
  }
  for (std::size_t j = 0; j < m; ++j) {
    out.col_dual[j] = pi[n + j];
    dual += b[j] * out.col_dual[j];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.dual_violation = std::max(
          out.dual_violation, out.row_dual[i] + out.col_dual[j] -
                                  cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  out.duality_gap = std::fabs(out.cost - dual);
  return out;
}

OtSolution solve_ot(std::span<const double> a, std::span<const double> b,
                    const Eigen::MatrixXd& cost) {
  const double tol = kCertificateTol * cost_scale(cost);
  auto uniform = [](std::span<const double> w) {
    const double ref = 1.0 / static_cast<double>(w.size());
    return std::all_of(w.begin(), w.end(),
                       [&](double x) { return std::fabs(x - ref) <= 1e-12 * ref; });
  };
  OtSolution out;
  if (a.size() == b.size() && uniform(a) && uniform(b)) {
    const auto sol = solve_assignment(cost);
    const double w = 1.0 / static_cast<double>(a.size());
    out.cost = sol.cost * w;
    for (std::size_t i = 0; i < a.size(); ++i) out.plan.push_back({i, sol.assignment[i], w});
    out.row_dual.resize(a.size());
    out.col_dual.resize(b.size());
    double dual = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.row_dual[i] = sol.row_dual[i];
      out.col_dual[i] = sol.col_dual[i];
      dual += w * (sol.row_dual[i] + sol.col_dual[i]);
    }
    out.dual_violation = sol.dual_violation;
    out.duality_gap = std::fabs(out.cost - dual);
  } else {
    out = solve_transport(a, b, cost);
  }
  if (out.dual_violation > tol || out.duality_gap > tol) {
    std::ostringstream msg;
    msg << "optimal transport certificate failed (dual violation " << out.dual_violation
        << ", gap " << out.duality_gap << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

}  // namespace gbip
