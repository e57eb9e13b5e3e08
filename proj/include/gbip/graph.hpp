#pragma once

// Geometric graph on a point cloud with the rescaled indicator kernel
//   K(r) = 1 for r <= 1, 0 otherwise,
//   sigma_K = alpha_m / (m + 2)      (alpha_m = volume of the unit m-ball),
//   W(i, j) = K(|x_i - x_j| / eps) / (sigma_K n^2 eps^(m+2)),
// and the unnormalized Laplacian D - W.
//
// With this weight scaling, D - W itself has eigenvalues of order 1/n. The
// operator compared with -Delta (and used for priors and heat flow) is
//   L_n = 2 n vol(M) (D - W),
// which is D - W read as an operator on L2(gamma_n) (factor 2n: its quadratic
// form (1/n) u^T L_n u equals the graph Dirichlet energy) with gamma expressed
// as a density relative to the Riemannian volume (factor vol(M)). The same
// eigenvectors diagonalize both.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <string>
#include <vector>

#include "gbip/eigensolver.hpp"
#include "gbip/manifold.hpp"
#include "gbip/spectral_measures.hpp"

namespace gbip {

class TransportMap;

/// Volume of the unit ball in R^m.
double unit_ball_volume(int m);

struct KernelSpec {
  double epsilon = 0.0;
  int intrinsic_dim = 1;
  double sigma_k = 0.0;

  /// Indicator kernel; throws ValidationError unless epsilon > 0.
  static KernelSpec indicator(double epsilon, int intrinsic_dim);

  /// The only nonzero weight value for a graph on n points.
  double weight(std::size_t n) const;
};

struct GraphWarning {
  std::string code;
  std::string message;
};

struct GeometricGraph {
  PointCloud cloud;
  KernelSpec kernel;
  Eigen::SparseMatrix<double> weights;  // symmetric, includes the self-loops K(0) = 1
  Eigen::VectorXd degree;
  std::size_t component_count = 0;
  std::vector<int> component;  // label per point
  std::vector<GraphWarning> warnings;

  bool connected() const { return component_count == 1; }
};

/// Assembles W over all pairs within Euclidean distance epsilon. A
/// disconnected graph is reported through `warnings`, not an exception.
GeometricGraph build_graph(const PointCloud& cloud, double epsilon);

struct GraphLaplacian {
  Eigen::SparseMatrix<double> matrix;  // D - W
  double spectral_scale = 1.0;         // L_n = spectral_scale * matrix
  std::size_t component_count = 1;

  Eigen::SparseMatrix<double> normalized() const { return spectral_scale * matrix; }
};

GraphLaplacian graph_laplacian(const GeometricGraph& graph);

/// k smallest eigenpairs of L_n. Vectors are orthonormal in L2(gamma_n):
/// (1/n) sum_k v_i(x_k) v_j(x_k) = delta_ij, i.e. sqrt(n) times unit Euclidean
/// vectors. Each vector's sign is fixed so that its largest-magnitude entry
/// (first on ties) is positive.
struct GraphSpectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd vectors;  // n x k
  double max_residual = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
  std::size_t points() const { return static_cast<std::size_t>(vectors.rows()); }
};

GraphSpectrum graph_spectrum(const GraphLaplacian& laplacian, std::size_t k,
                             const EigenSolverOptions& options = {});

/// Rotates graph eigenvectors within each continuum eigenvalue cluster by the
/// orthogonal Procrustes solution that best matches psi_i composed with the
/// transport map (L2 over the map's source quadrature). Clusters cover the
/// first min(graph size, continuum size) modes; modes past that are left as
/// they are. Throws ValidationError naming the cluster when a cluster is
/// split by the truncation.
GraphSpectrum align_spectrum(const GraphSpectrum& graph_spec, const ContinuumSpectrum& cont_spec,
                             const TransportMap& map);

/// Same, for the first `k_align` modes only (k_align must end on a cluster boundary).
GraphSpectrum align_spectrum(const GraphSpectrum& graph_spec, const ContinuumSpectrum& cont_spec,
                             const TransportMap& map, std::size_t k_align);

/// The per-cluster rotations used by align_spectrum: aligned vectors are
/// vectors.middleCols(b.begin, d) * b.q.
std::vector<RotationBlock> alignment_rotation(const GraphSpectrum& graph_spec,
                                              const ContinuumSpectrum& cont_spec,
                                              const TransportMap& map, std::size_t k_align);

GraphSpectrum apply_rotation(const GraphSpectrum& graph_spec,
                             const std::vector<RotationBlock>& blocks);

/// Writes W as "i j w" lines (0-based, both triangles, self-loops included).
void write_triplets(const GeometricGraph& graph, const std::string& path);

}  // namespace gbip
