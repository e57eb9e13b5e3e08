#pragma once

// Heat-equation inverse problem: u -> y = O(F(u)) + eta, where F is the heat
// semigroup exp(-t L) (L = -Delta on the manifold, L_n on the graph) and O
// integrates against gamma (or gamma_n) over chordal balls B_delta(x_j).
// All operators are linear in the spectral coefficients, so the problem is
// represented by a p x k matrix G per basis.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "gbip/graph.hpp"
#include "gbip/manifold.hpp"
#include "gbip/spectral_measures.hpp"

namespace gbip {

enum class NoiseKind { gaussian, laplace };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  double scale = 0.05;  // sigma (gaussian) or b (laplace)

  static NoiseModel gaussian(double sigma) { return {NoiseKind::gaussian, sigma}; }
  static NoiseModel laplace(double b) { return {NoiseKind::laplace, b}; }

  /// Throws ValidationError unless scale > 0.
  void validate() const;
  /// phi(r): |r|^2 / (2 sigma^2) or sum |r_j| / b.
  double potential(const Eigen::VectorXd& residual) const;
  /// -log density of eta at r; equals potential(r) + normalizing_constant(p).
  double negative_log_density(const Eigen::VectorXd& residual) const;
  double normalizing_constant(std::size_t p) const;
  Eigen::VectorXd sample(std::size_t p, std::uint64_t seed) const;
};

struct ObservationSetup {
  Manifold manifold = Manifold::circle();
  std::vector<ChartPoint> centers;
  std::vector<double> center_coords;  // row-major ambient coordinates
  double delta = 0.2;
  NoiseModel noise;
  /// Divide each ball integral by the ball's measure (off: plain integral).
  bool normalize = false;

  std::size_t p() const { return centers.size(); }
};

/// Setup whose centers are the first p cloud points. Throws when p > n or
/// delta <= 0.
ObservationSetup observation_setup(const PointCloud& cloud, std::size_t p, double delta,
                                   NoiseModel noise, bool normalize = false);

struct DataVector {
  Eigen::VectorXd y;
  std::string provenance;  // "synthetic" or "file"
  std::uint64_t noise_seed = 0;
  Eigen::VectorXd truth_coefficients;  // continuum coefficients of the true input (synthetic)
  std::string truth_basis;
};

// ---- forward heat map ----

/// exp(-lambda_i t). Throws ValidationError for t < 0.
Eigen::VectorXd heat_multipliers(std::span<const double> eigenvalues, double t);

/// Coefficients of F(u) from coefficients of u.
Eigen::VectorXd forward_heat(const Eigen::VectorXd& coefficients,
                             std::span<const double> eigenvalues, double t = 1.0);

/// F_n(u_n) for nodal values on the cloud, through the computed graph modes
/// (exact when the spectrum is complete).
Eigen::VectorXd forward_heat(const GraphSpectrum& spectrum, const Eigen::VectorXd& values,
                             double t = 1.0);

// ---- observations ----

struct CloudObservation {
  Eigen::VectorXd values;
  std::vector<std::size_t> counts;  // cloud points per ball
  std::vector<std::string> warnings;
};

/// (1/n) sum over cloud points in the closed ball (or the mean, when normalized).
CloudObservation observe_cloud(const PointCloud& cloud, const Eigen::VectorXd& values,
                               const ObservationSetup& setup);

/// Observation matrix of nodal bases: column i observes basis column i. Empty
/// balls give zero rows.
Eigen::MatrixXd observe_cloud_basis(const PointCloud& cloud, const Eigen::MatrixXd& basis,
                                    const ObservationSetup& setup);

/// Integral of v against gamma over each ball, by composite Gauss-Legendre
/// quadrature in chart coordinates (panels per angle).
Eigen::VectorXd observe_continuum(const std::function<double(ChartPoint)>& v,
                                  const ObservationSetup& setup, std::size_t panels = 16);

/// p x k matrix observing the first k continuum eigenfunctions.
Eigen::MatrixXd observe_continuum_modes(const ContinuumSpectrum& spectrum, std::size_t k,
                                        const ObservationSetup& setup, std::size_t panels = 16);

/// gamma-measure of B_delta(x) intersected with the manifold (independent of x).
double ball_measure(const Manifold& manifold, double delta);

// ---- forward operators G = O o F on coefficients ----

/// G_n (p x k): column i is O_n(exp(-lambda_i^n t) psi_i^n).
Eigen::MatrixXd graph_forward_operator(const PointCloud& cloud, const GraphSpectrum& spectrum,
                                       const ObservationSetup& setup, double t = 1.0);

/// G (p x k): column i is exp(-lambda_i t) O(psi_i).
Eigen::MatrixXd continuum_forward_operator(const ContinuumSpectrum& spectrum, std::size_t k,
                                           const ObservationSetup& setup, double t = 1.0);

/// phi(u; y) = phi_noise(y - G u).
double potential(const Eigen::VectorXd& coefficients, const Eigen::VectorXd& y,
                 const Eigen::MatrixXd& forward, const NoiseModel& noise);

// ---- conjugate posterior ----

struct PosteriorGaussian {
  std::string basis_ref;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  /// Square-root law sharing xi_i by mode with the prior.
  CoefficientLaw law;

  std::size_t size() const { return static_cast<std::size_t>(mean.size()); }
};

/// Closed-form posterior for a Gaussian prior, linear G (p x k) and Gaussian
/// noise sigma > 0. With B = G C^(1/2) = U S V^T:
///   mean = C^(1/2) V S (S^2 + sigma^2)^(-1) U^T y
///   cov  = C^(1/2) (I - V S^2 (S^2 + sigma^2)^(-1) V^T) C^(1/2)
/// and the symmetric root C^(1/2) (I - V (I - sigma (S^2 + sigma^2)^(-1/2)) V^T).
PosteriorGaussian conjugate_posterior(const DiagonalGaussianMeasure& prior,
                                      const Eigen::MatrixXd& forward, const Eigen::VectorXd& y,
                                      double noise_std);

/// Draws the true input from the (continuum) prior and returns y = G u + eta.
DataVector synthesize_data(const DiagonalGaussianMeasure& prior, const Eigen::MatrixXd& forward,
                           const NoiseModel& noise, std::uint64_t seed);

// ---- pCN ----

/// Binary chain file: one record per kept step, little-endian doubles
/// [step, accepted, u_1 .. u_k]; a JSON sidecar at `path + ".json"` describes
/// the layout.
class ChainWriter {
 public:
  ChainWriter(std::string path, std::size_t dim, std::string basis_ref);
  ~ChainWriter();
  ChainWriter(const ChainWriter&) = delete;
  ChainWriter& operator=(const ChainWriter&) = delete;

  void write(std::size_t step, bool accepted, const Eigen::VectorXd& u);
  void close();

 private:
  std::string path_;
  std::size_t dim_;
  std::string basis_ref_;
  std::size_t records_ = 0;
  std::ofstream os_;
};

struct PcnOptions {
  std::size_t n_steps = 100000;
  std::size_t burn_in = 10000;
  double beta = 0.2;
  std::uint64_t seed = 1;
  std::size_t batches = 50;  // batch means for standard errors
  ChainWriter* writer = nullptr;
};

struct PcnResult {
  double acceptance_rate = 0.0;
  std::size_t kept = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::VectorXd mean_stderr;
  Eigen::VectorXd variance_stderr;
};

/// Preconditioned Crank-Nicolson chain for exp(-phi) times the prior:
/// u' = m + sqrt(1 - beta^2) (u - m) + beta sigma .* z, accepted with
/// probability min(1, exp(phi(u) - phi(u'))). Starts at the prior mean.
PcnResult pcn_sample(const DiagonalGaussianMeasure& prior,
                     const std::function<double(const Eigen::VectorXd&)>& phi,
                     const PcnOptions& options);

}  // namespace gbip
