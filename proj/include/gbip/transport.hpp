#pragma once

// Transport maps gamma -> gamma_n, the TL2 metric between (measure, function)
// pairs, the spectral projection P_n, and Monte-Carlo distances between
// measures over functions.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gbip/graph.hpp"
#include "gbip/manifold.hpp"
#include "gbip/spectral_measures.hpp"

namespace gbip {

/// Measure-preserving map from (a quadrature discretization of) gamma onto the
/// cloud. Source node s carries weight source_weights[s] and is sent to cloud
/// point target[s].
class TransportMap {
 public:
  enum class Construction {
    monotone_arcs,     // circle: exact quantile-arc rearrangement
    voronoi_grid,      // torus: nearest-point assignment, an upper-bound surrogate
  };

  /// target_points are the chart coordinates of the cloud.
  TransportMap(Manifold manifold, Construction construction, QuadratureGrid source,
               std::vector<std::uint32_t> target, std::span<const ChartPoint> target_points,
               double t_n);

  const Manifold& manifold() const { return manifold_; }
  Construction construction() const { return construction_; }
  const QuadratureGrid& source() const { return source_; }
  const std::vector<std::uint32_t>& target() const { return target_; }
  std::size_t target_count() const { return target_count_; }

  /// esssup_x d(x, T_n(x)).
  double t_n() const { return t_n_; }

  /// Mass received by each cloud point.
  const std::vector<double>& target_mass() const { return target_mass_; }
  /// max_i |target_mass[i] - 1/n|.
  double mass_defect() const;

  /// d(x_s, T_n x_s)^2 per source node.
  const std::vector<double>& displacement_sq() const { return displacement_sq_; }
  /// Integral of d(x, T_n x)^2 over the source.
  double mean_squared_displacement() const { return msd_; }

 private:
  Manifold manifold_;
  Construction construction_;
  QuadratureGrid source_;
  std::vector<std::uint32_t> target_;
  std::size_t target_count_;
  double t_n_;
  std::vector<double> target_mass_;
  std::vector<double> displacement_sq_;
  double msd_ = 0.0;
};

std::string to_string(TransportMap::Construction c);

/// Circle: monotone rearrangement of quantile arcs onto the angle-sorted
/// points, rotated to minimize t_n; each arc is discretized by
/// ceil(resolution / n) midpoint nodes, so masses are exactly 1/n.
/// Torus: nearest-point (geodesic) assignment on a g x g grid with
/// g = ceil(sqrt(resolution)); t_n includes the half-diagonal of a grid cell
/// so it bounds the distance over whole cells. Masses are only approximately
/// 1/n (see mass_defect), so the torus map is an upper-bound surrogate.
TransportMap transport_map(const Manifold& manifold, const PointCloud& cloud,
                           std::size_t resolution);

/// An element (theta, f) of TL2 with atomic theta.
struct TL2Point {
  Manifold manifold = Manifold::circle();
  std::vector<double> coords;   // row-major atoms
  std::vector<double> weights;  // probability weights
  std::vector<double> values;   // f at each atom

  std::size_t size() const { return weights.size(); }
  std::span<const double> atom(std::size_t i) const {
    const std::size_t d = manifold.ambient_dim();
    return {coords.data() + i * d, d};
  }

  /// (gamma_n, f) for a function on the cloud.
  static TL2Point on_cloud(const PointCloud& cloud, std::span<const double> values);
  /// (gamma, f) discretized on a quadrature grid.
  static TL2Point on_grid(const QuadratureGrid& grid, const Manifold& manifold,
                          std::span<const double> values);
};

enum class Tl2Method { exact_ot, map_bound };

struct Tl2Options {
  /// Maximum atoms per side for exact OT.
  std::size_t max_atoms = 512;
};

/// d_TL2 by exact discrete OT (ground cost d_M(x,y)^2 + |f(x) - g(y)|^2).
/// Throws ValidationError when an atom budget is exceeded (use map_bound).
double tl2_distance(const TL2Point& a, const TL2Point& b, const Tl2Options& options = {});

/// Cost of the coupling x_i -> y_{assignment[i]} (mass a.weights[i]); an
/// upper bound on d_TL2. The pushforward of a's weights must equal b's weights.
double tl2_distance(const TL2Point& a, const TL2Point& b, std::span<const std::uint32_t> assignment);

/// Dispatches on method; map_bound requires an assignment.
double tl2_distance(const TL2Point& a, const TL2Point& b, Tl2Method method,
                    std::span<const std::uint32_t> assignment = {},
                    const Tl2Options& options = {});

/// map_bound through a transport map: source values are f at map.source()
/// nodes, target values are g on the cloud.
double transported_distance(const TransportMap& map, std::span<const double> source_values,
                            std::span<const double> target_values);

/// P_n(u) = sum_i ((alpha + lambda_i) / (alpha + lambda_i^n))^(s/4) a_i psi_i^n
/// over the first min(k_graph, k_cont, coeffs) modes. Returns graph coefficients.
Eigen::VectorXd projection_coefficients(std::span<const double> continuum_coefficients,
                                        std::span<const double> graph_eigenvalues,
                                        std::span<const double> continuum_eigenvalues,
                                        double alpha, double s);

/// Values of P_n(u) on the cloud.
Eigen::VectorXd projection(std::span<const double> continuum_coefficients,
                           const GraphSpectrum& graph_spec, const ContinuumSpectrum& cont_spec,
                           double alpha, double s);

enum class Coupling { shared_xi, independent };
std::string to_string(Coupling c);

struct DistanceEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t n_pairs = 0;
  Coupling coupling = Coupling::shared_xi;
  std::string method = "map_bound";
};

/// A Gaussian measure over functions sampled at fixed nodes:
/// f = basis_values * (law draw). basis_values is (nodes x law.dim()).
struct NodalGaussianField {
  Eigen::MatrixXd basis_values;
  CoefficientLaw law;
};

/// E[d_TL2((gamma_n, X_n), (gamma, X))] over n_pairs draws, where X_n lives on
/// the cloud (nodes = cloud points), X on map.source() nodes, and the pair is
/// coupled through shared standard normals (by index) or drawn independently.
/// Every coupling gives an upper bound on the Wasserstein distance over TL2.
DistanceEstimate measure_distance_tl2(const NodalGaussianField& on_cloud,
                                      const NodalGaussianField& on_manifold,
                                      const TransportMap& map, std::size_t n_pairs,
                                      std::uint64_t seed, Coupling coupling);

}  // namespace gbip
