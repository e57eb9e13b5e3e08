#pragma once

// Exact discrete optimal transport for small problems.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace gbip {

struct TransportPlanEntry {
  std::size_t row;
  std::size_t col;
  double mass;
};

struct OtSolution {
  double cost = 0.0;
  std::vector<TransportPlanEntry> plan;
  std::vector<double> row_dual;
  std::vector<double> col_dual;
  /// Largest violation of u_i + v_j <= c_ij (0 when dual feasible).
  double dual_violation = 0.0;
  /// |primal cost - dual objective|.
  double duality_gap = 0.0;
};

/// Minimum-cost perfect assignment for an n x m cost matrix, n <= m
/// (shortest augmenting path with potentials). Each row carries mass 1.
/// assignment[i] is the column of row i.
struct AssignmentSolution {
  double cost = 0.0;
  std::vector<std::size_t> assignment;
  std::vector<double> row_dual;
  std::vector<double> col_dual;
  double dual_violation = 0.0;
};
AssignmentSolution solve_assignment(const Eigen::MatrixXd& cost);

/// Transport between weight vectors a (rows) and b (cols) of equal total mass
/// (successive shortest paths with Dijkstra on reduced costs).
OtSolution solve_transport(std::span<const double> a, std::span<const double> b,
                           const Eigen::MatrixXd& cost);

/// Picks solve_assignment when both sides are uniform with the same count,
/// solve_transport otherwise. Throws NumericalError when the optimality
/// certificate fails (dual violation or gap above 1e-9 relative to max cost).
OtSolution solve_ot(std::span<const double> a, std::span<const double> b,
                    const Eigen::MatrixXd& cost);

}  // namespace gbip
