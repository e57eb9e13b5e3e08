#pragma once

// Analytic ground-truth geometries with closed-form Laplace-Beltrami spectra.
//
// circle      unit circle in R^2, angle theta. Riemannian length 2*pi.
// flat_torus  Clifford torus in R^4:
//               x = r (cos a, sin a, cos b, sin b),  r = 1/sqrt(2),
//             so |x| = 1 and each R^2 block has norm 1/sqrt(2). Flat metric
//             r^2 (da^2 + db^2); area 2*pi^2; -Delta eigenvalues 2 (j^2 + l^2).
//
// gamma is the normalized (probability) volume measure in both cases.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gbip {

enum class ManifoldKind { circle, flat_torus };

std::string to_string(ManifoldKind kind);
ManifoldKind manifold_kind_from_string(const std::string& name);

/// Intrinsic (chart) coordinates: one angle for the circle, two for the torus.
struct ChartPoint {
  double a = 0.0;
  double b = 0.0;
};

/// Nodes and weights of a quadrature rule for integrals against gamma.
struct QuadratureGrid {
  std::size_t ambient_dim = 0;
  std::vector<double> coords;  // row-major, size() == weights.size() * ambient_dim
  std::vector<ChartPoint> charts;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * ambient_dim, ambient_dim};
  }
};

class Manifold {
 public:
  static constexpr double kTorusRadius = 0.70710678118654752440;  // 1/sqrt(2)
  static constexpr double kOnManifoldTol = 1e-9;

  static Manifold circle() { return Manifold(ManifoldKind::circle); }
  static Manifold flat_torus() { return Manifold(ManifoldKind::flat_torus); }
  static Manifold of_kind(ManifoldKind kind) { return Manifold(kind); }

  ManifoldKind kind() const { return kind_; }
  int intrinsic_dim() const { return kind_ == ManifoldKind::circle ? 1 : 2; }
  std::size_t ambient_dim() const { return kind_ == ManifoldKind::circle ? 2 : 4; }

  /// Riemannian volume (length or area) before normalization of gamma.
  double volume() const;
  /// volume()^(1/m); the natural unit of length of the manifold.
  double length_scale() const;
  /// Largest geodesic distance between two points.
  double diameter() const;

  /// Embedding of chart coordinates into ambient space.
  void embed(ChartPoint c, std::span<double> out) const;
  std::vector<double> embed(ChartPoint c) const;
  /// Chart coordinates (angles in [0, 2 pi)) of an ambient point.
  ChartPoint chart(std::span<const double> x) const;

  bool contains(std::span<const double> x, double tol = kOnManifoldTol) const;

  /// Geodesic distance; throws DomainError for off-manifold input.
  double geodesic(std::span<const double> x, std::span<const double> y) const;
  /// Geodesic distance between chart points (no validation).
  double geodesic(ChartPoint x, ChartPoint y) const;

  /// Uniform tensor grid (periodic trapezoid rule), `resolution` nodes per angle.
  QuadratureGrid quadrature_grid(std::size_t resolution) const;

  /// Approximates the integral of f against gamma. resolution >= 2.
  double quadrature(const std::function<double(ChartPoint)>& f, std::size_t resolution) const;

  friend bool operator==(const Manifold&, const Manifold&) = default;

 private:
  explicit Manifold(ManifoldKind kind) : kind_(kind) {}
  ManifoldKind kind_;
};

/// n i.i.d. uniform samples from gamma. The cloud for (n, seed) is the
/// length-n prefix of a single i.i.d. sequence, so clouds with the same seed
/// are nested.
class PointCloud {
 public:
  PointCloud(Manifold manifold, std::uint64_t seed, std::vector<double> coords);

  const Manifold& manifold() const { return manifold_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return n_; }
  std::size_t ambient_dim() const { return manifold_.ambient_dim(); }

  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * ambient_dim(), ambient_dim()};
  }
  const std::vector<double>& coords() const { return coords_; }
  ChartPoint chart(std::size_t i) const { return charts_[i]; }
  const std::vector<ChartPoint>& charts() const { return charts_; }

  /// Coordinates in structure-of-arrays layout (one vector per ambient dimension).
  const std::vector<std::vector<double>>& columns() const { return columns_; }

  /// Mass gamma_n assigns to each point.
  double point_mass() const { return 1.0 / static_cast<double>(n_); }

 private:
  Manifold manifold_;
  std::uint64_t seed_;
  std::size_t n_;
  std::vector<double> coords_;
  std::vector<ChartPoint> charts_;
  std::vector<std::vector<double>> columns_;
};

PointCloud sample(const Manifold& manifold, std::size_t n, std::uint64_t seed);

/// One real Fourier factor: 1 (freq 0), sqrt2 cos(freq t) or sqrt2 sin(freq t).
struct TrigFactor {
  int freq = 0;
  bool is_sin = false;

  double value(double t) const;
  double second_derivative(double t) const;
};

/// Label of an eigenfunction: product of one (circle) or two (torus) factors.
struct ModeLabel {
  TrigFactor first;
  TrigFactor second;  // unused (freq 0) on the circle
};

/// Closed-form eigenpairs of -Delta, orthonormal in L2(gamma), sorted by
/// eigenvalue. Ties are ordered deterministically: on the circle cos before
/// sin; on the torus lattice points (j, l) lexicographically, then factor
/// types with cos before sin.
class ContinuumSpectrum {
 public:
  ContinuumSpectrum(Manifold manifold, std::vector<double> eigenvalues,
                    std::vector<ModeLabel> labels);

  const Manifold& manifold() const { return manifold_; }
  std::size_t size() const { return eigenvalues_.size(); }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  double eigenvalue(std::size_t i) const { return eigenvalues_[i]; }
  const ModeLabel& label(std::size_t i) const { return labels_[i]; }

  double value(std::size_t i, ChartPoint c) const;
  double value(std::size_t i, std::span<const double> x) const;
  /// Laplace-Beltrami Delta psi_i from analytic second derivatives.
  double laplacian(std::size_t i, ChartPoint c) const;

  /// Evaluates modes [0, k) at chart points; result is row-major
  /// (points.size() x k), i.e. entry (p, i) at [p * k + i].
  std::vector<double> evaluate(std::span<const ChartPoint> points, std::size_t k) const;

  /// Index ranges [begin, end) of eigenvalue clusters among the first k modes
  /// (relative gap below `rel_gap`). The last cluster may be cut at k.
  std::vector<std::pair<std::size_t, std::size_t>> clusters(std::size_t k,
                                                            double rel_gap = 1e-6) const;

  /// Largest k' <= k such that no eigenvalue cluster is split at k'.
  std::size_t complete_cluster_prefix(std::size_t k) const;

 private:
  Manifold manifold_;
  std::vector<double> eigenvalues_;
  std::vector<ModeLabel> labels_;
};

ContinuumSpectrum continuum_spectrum(const Manifold& manifold, std::size_t k);

/// Upper bound on sum_{i >= k} (alpha + lambda_i)^(-exponent) for exponent > m/2,
/// from explicit summation to a large index plus a Weyl-law integral tail.
double spectral_tail_bound(const Manifold& manifold, std::size_t k, double alpha,
                           double exponent);

}  // namespace gbip
