#include "gbip/eigensolver.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gbip/errors.hpp"
#include "gbip/rng.hpp"

namespace gbip {

namespace {

double max_relative_residual(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& values,
                             const Eigen::MatrixXd& vectors) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const Eigen::VectorXd v = vectors.col(i);
    const double r = (a * v - values(i) * v).norm() / v.norm();
    worst = std::max(worst, r / (1.0 + std::fabs(values(i))));
  }
  return worst;
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  return qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

}  // namespace

SymmetricEigenpairs smallest_eigenpairs_dense(const Eigen::MatrixXd& a, std::size_t k,
                                              bool values_only) {
  const auto n = static_cast<lapack_int>(a.rows());
  if (k < 1 || static_cast<lapack_int>(k) > n) {
    throw ValidationError("eigensolver: need 1 <= k <= n");
  }
  Eigen::MatrixXd work = a;  // dsyevr destroys its input
  lapack_int found = 0;
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z;
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(k));
  if (!values_only) z.resize(n, static_cast<Eigen::Index>(k));
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, values_only ? 'N' : 'V', 'I', 'U', n, work.data(), n, 0.0, 0.0, 1,
      static_cast<lapack_int>(k), LAPACKE_dlamch('S'), &found, w.data(),
      values_only ? nullptr : z.data(), n, values_only ? nullptr : support.data());
  if (info != 0 || found != static_cast<lapack_int>(k)) {
    std::ostringstream msg;
    msg << "dsyevr failed (info=" << info << ", found " << found << " of " << k << ")";
    throw NumericalError(msg.str());
  }
  SymmetricEigenpairs out;
  out.values = w.head(static_cast<Eigen::Index>(k));
  out.vectors = std::move(z);
  return out;
}

SymmetricEigenpairs smallest_eigenpairs_sparse(const Eigen::SparseMatrix<double>& a,
                                               std::size_t k, double residual_tol) {
  const Eigen::Index n = a.rows();
  if (k < 1 || static_cast<Eigen::Index>(k) > n) {
    throw ValidationError("eigensolver: need 1 <= k <= n");
  }
  // Shift-invert subspace iteration. The shift keeps A + tau I positive definite.
  const double mean_diag = a.diagonal().cwiseAbs().mean();
  const double tau = 1e-3 * std::max(1.0, mean_diag);
  Eigen::SparseMatrix<double> shifted = a;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += tau;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw NumericalError("eigensolver: LDLT factorization failed");

  const auto ki = static_cast<Eigen::Index>(k);
  const Eigen::Index block = std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * ki, ki + 16));
  Rng rng(stream_key(0x5eed, Stage::test, static_cast<std::uint64_t>(n)));
  Eigen::MatrixXd x(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = rng.normal();
  x = orthonormalize(x);

  SymmetricEigenpairs out;
  out.iterative = true;
  constexpr int kMaxIterations = 500;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::MatrixXd y = ldlt.solve(x);
    const Eigen::MatrixXd q = orthonormalize(y);
    const Eigen::MatrixXd h = q.transpose() * (a * q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h + h.transpose()));
    x = q * es.eigenvectors();
    out.values = es.eigenvalues().head(ki);
    out.vectors = x.leftCols(ki);
    out.max_residual = max_relative_residual(a, out.values, out.vectors);
    if (out.max_residual <= residual_tol) return out;
  }
  std::ostringstream msg;
  msg << "eigensolver: subspace iteration did not converge, worst relative residual "
      << out.max_residual;
  throw NumericalError(msg.str());
}

SymmetricEigenpairs smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, std::size_t k,
                                        const EigenSolverOptions& options) {
  const auto n = static_cast<std::size_t>(a.rows());
  SymmetricEigenpairs out;
  if (n <= options.dense_threshold || 2 * k > n) {
    out = smallest_eigenpairs_dense(Eigen::MatrixXd(a), k, options.values_only);
    if (!options.values_only) out.max_residual = max_relative_residual(a, out.values, out.vectors);
  } else {
    out = smallest_eigenpairs_sparse(a, k, options.residual_tol);
    if (options.values_only) out.vectors.resize(0, 0);
  }
  if (!options.values_only && out.max_residual > options.residual_tol) {
    std::ostringstream msg;
    msg << "eigensolver: worst relative residual " << out.max_residual << " exceeds tolerance "
        << options.residual_tol;
    throw NumericalError(msg.str());
  }
  return out;
}

}  // namespace gbip
