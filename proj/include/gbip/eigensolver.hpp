#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>

namespace gbip {

struct EigenSolverOptions {
  /// Use the dense LAPACK path up to this dimension, subspace iteration above.
  std::size_t dense_threshold = 2000;
  /// Required ||A v - lambda v|| / ||v|| <= residual_tol * (1 + |lambda|).
  double residual_tol = 1e-9;
  /// Compute eigenvalues only (vectors left empty).
  bool values_only = false;
};

/// k smallest eigenpairs of a symmetric matrix, ascending, unit Euclidean norm.
struct SymmetricEigenpairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // n x k (empty when values_only)
  double max_residual = 0.0;
  bool iterative = false;
};

/// Dense path: LAPACK dsyevr restricted to the index range [1, k].
SymmetricEigenpairs smallest_eigenpairs_dense(const Eigen::MatrixXd& a, std::size_t k,
                                              bool values_only = false);

/// Iterative path: shift-invert subspace iteration with Rayleigh-Ritz on a
/// sparse symmetric positive semidefinite matrix.
SymmetricEigenpairs smallest_eigenpairs_sparse(const Eigen::SparseMatrix<double>& a,
                                               std::size_t k, double residual_tol = 1e-9);

/// Chooses the path from options.dense_threshold, checks residuals and throws
/// NumericalError with the worst residual when the tolerance is missed.
SymmetricEigenpairs smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, std::size_t k,
                                        const EigenSolverOptions& options = {});

}  // namespace gbip
