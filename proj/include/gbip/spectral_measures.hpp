#pragma once

// Gaussian measures over functions, represented by per-mode means and
// standard deviations in a spectral basis (graph or continuum).
//
// Prior convention: std_i = (alpha + lambda_i)^(-s/4), i.e. covariance
// (alpha + L)^(-s/2), identically on the graph and on the manifold. This is
// the normalization under which the Karhunen-Loeve draws
//   X_n = sum_i (alpha + lambda_i^n)^(-s/4) xi_i psi_i^n
//   X   = sum_i (alpha + lambda_i  )^(-s/4) xi_i psi_i
// are distributed according to the graph and continuum priors.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gbip/manifold.hpp"

namespace gbip {

struct GraphSpectrum;

class DiagonalGaussianMeasure {
 public:
  DiagonalGaussianMeasure(std::string basis_ref, Eigen::VectorXd means, Eigen::VectorXd stds,
                          double tail_bound = 0.0);

  const std::string& basis_ref() const { return basis_ref_; }
  const Eigen::VectorXd& means() const { return means_; }
  const Eigen::VectorXd& stds() const { return stds_; }
  std::size_t truncation() const { return static_cast<std::size_t>(means_.size()); }
  /// Bound on the variance carried by modes past the truncation.
  double tail_bound() const { return tail_bound_; }
  double trace() const { return stds_.squaredNorm(); }

 private:
  std::string basis_ref_;
  Eigen::VectorXd means_;
  Eigen::VectorXd stds_;
  double tail_bound_;
};

/// Centered prior with std_i = (alpha + lambda_i)^(-s/4).
/// Requires s > m. Throws DegenerateCovarianceError when alpha + lambda_1 == 0.
DiagonalGaussianMeasure gaussian_prior(std::string basis_ref, std::span<const double> eigenvalues,
                                       double alpha, double s, int intrinsic_dim,
                                       double tail_bound = 0.0);

/// Continuum prior truncated at k modes (k == 0: smallest complete-cluster k
/// whose tail sum_{i>k} (alpha + lambda_i)^(-s/2) is below tail_target). The
/// tail bound is attached to the measure.
DiagonalGaussianMeasure continuum_prior(const Manifold& manifold, double alpha, double s,
                                        std::size_t k = 0, double tail_target = 1e-6);

/// Graph prior over all computed graph modes.
DiagonalGaussianMeasure graph_prior(const GraphSpectrum& spectrum, double alpha, double s,
                                    int intrinsic_dim, std::string basis_ref = "graph");

/// Orthogonal block acting on coefficients [begin, begin + q.rows()).
struct RotationBlock {
  std::size_t begin = 0;
  Eigen::MatrixXd q;
};

/// Law of a coefficient vector as an affine image of standard normals:
///   x = mean + stds .* (z - V diag(shrink) V^T z),  z = Q xi
/// with Q block-diagonal orthogonal (identity unless an input rotation is
/// set). Q does not change the law; it only changes which xi a draw uses,
/// which is how draws in two different bases are coupled.
/// V has orthonormal columns; V empty means a diagonal Gaussian. The
/// low-rank form is the symmetric square root of a conjugate posterior, which
/// keeps mode i of the draw tied to xi_i.
class CoefficientLaw {
 public:
  CoefficientLaw() = default;
  static CoefficientLaw diagonal(Eigen::VectorXd mean, Eigen::VectorXd stds);
  static CoefficientLaw of(const DiagonalGaussianMeasure& measure);
  static CoefficientLaw diagonal_low_rank(Eigen::VectorXd mean, Eigen::VectorXd stds,
                                          Eigen::MatrixXd v, Eigen::VectorXd shrink);

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& stds() const { return stds_; }

  /// Uses the first dim() entries of xi.
  Eigen::VectorXd draw(const Eigen::VectorXd& xi) const;
  /// Columns of xi are independent draws; returns dim() x xi.cols().
  Eigen::MatrixXd draw_batch(const Eigen::MatrixXd& xi) const;

  /// Law of diag(multipliers) x.
  CoefficientLaw scaled(const Eigen::VectorXd& multipliers) const;

  /// Same law, drawing through z = Q xi. Blocks past dim() are ignored.
  CoefficientLaw with_input_rotation(std::vector<RotationBlock> blocks) const;

  Eigen::VectorXd marginal_variances() const;
  Eigen::MatrixXd covariance() const;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd stds_;
  Eigen::MatrixXd v_;
  Eigen::VectorXd shrink_;
  std::vector<RotationBlock> rotation_;

  void rotate(Eigen::Ref<Eigen::MatrixXd> z) const;
};

/// Standard normal vector of length k from the stream keyed by seed.
Eigen::VectorXd standard_normals(std::size_t k, std::uint64_t seed);

/// Coefficients m_i + std_i xi_i.
Eigen::VectorXd sample_coefficients(const DiagonalGaussianMeasure& measure, std::uint64_t seed);

/// Draws from two measures sharing xi_i by mode index.
std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_coupled(const DiagonalGaussianMeasure& a,
                                                           const DiagonalGaussianMeasure& b,
                                                           std::uint64_t seed);

/// Function values sum_i c_i psi_i at nodes, basis given as (nodes x k) values.
Eigen::VectorXd synthesize(const Eigen::MatrixXd& basis_values, const Eigen::VectorXd& coefficients);

/// Function on the cloud from graph coefficients.
Eigen::VectorXd synthesize(const GraphSpectrum& spectrum, const Eigen::VectorXd& coefficients);

/// Graph coefficients <f, psi_i^n>_{gamma_n}.
Eigen::VectorXd analyze(const GraphSpectrum& spectrum, const Eigen::VectorXd& values);

/// Draw of the measure as a function on the cloud (graph basis) or at chart
/// points (continuum basis).
Eigen::VectorXd sample_measure(const DiagonalGaussianMeasure& measure,
                               const GraphSpectrum& spectrum, std::uint64_t seed);
Eigen::VectorXd sample_measure(const DiagonalGaussianMeasure& measure,
                               const ContinuumSpectrum& spectrum,
                               std::span<const ChartPoint> points, std::uint64_t seed);

/// KL(nu || pi) for diagonal Gaussians on the same basis. +infinity when nu
/// charges a mode pi does not (including std_nu = 0 against std_pi > 0, where
/// nu is singular). Throws ValidationError on basis or truncation mismatch.
double kl_divergence(const DiagonalGaussianMeasure& nu, const DiagonalGaussianMeasure& pi);

/// KL(N(mean, cov) || pi) for a dense covariance against a diagonal pi on the
/// same truncation: (tr A - k - log det A + m^T C^-1 m) / 2 with
/// A = C^(-1/2) cov C^(-1/2). +infinity when cov is singular.
double kl_divergence(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                     const DiagonalGaussianMeasure& pi);

/// W2 between diagonal Gaussians on the same basis.
double wasserstein2_gaussian(const DiagonalGaussianMeasure& a, const DiagonalGaussianMeasure& b);

/// phi(u; y) = |y - G u|^2 / (2 noise_std^2) for a linear forward map on coefficients.
struct LinearGaussianPotential {
  Eigen::MatrixXd forward;  // p x k
  Eigen::VectorXd data;     // p
  double noise_std = 1.0;

  double operator()(const Eigen::VectorXd& coefficients) const;
  /// E_nu[phi] for nu = N(mean, cov): (|y - G m|^2 + tr(G C G^T)) / (2 sigma^2).
  double expectation(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) const;
  double expectation_diagonal(const Eigen::VectorXd& mean, const Eigen::VectorXd& variances) const;
};

struct JValue {
  double value = 0.0;
  double kl = 0.0;
  double expected_potential = 0.0;
  double stderr_ = 0.0;  // Monte-Carlo standard error of the potential term
  bool exact = true;
};

/// J(nu) = KL(nu || pi) + E_nu[phi], exact for the linear-Gaussian potential.
JValue j_functional(const DiagonalGaussianMeasure& nu, const DiagonalGaussianMeasure& pi,
                    const LinearGaussianPotential& potential);

/// Same for nu = N(mean, cov) with a dense covariance.
JValue j_functional(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                    const DiagonalGaussianMeasure& pi, const LinearGaussianPotential& potential);

/// J with the potential term estimated from n_mc draws of nu.
JValue j_functional(const DiagonalGaussianMeasure& nu, const DiagonalGaussianMeasure& pi,
                    const std::function<double(const Eigen::VectorXd&)>& potential,
                    std::size_t n_mc, std::uint64_t seed);

}  // namespace gbip
