#include "gbip/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <tuple>

#include "gbip/errors.hpp"
#include "gbip/ot.hpp"
#include "gbip/rng.hpp"

namespace gbip {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double t) {
  t = std::fmod(t, kTwoPi);
  return t < 0.0 ? t + kTwoPi : t;
}

}  // namespace

TransportMap::TransportMap(Manifold manifold, Construction construction, QuadratureGrid source,
                           std::vector<std::uint32_t> target,
                           std::span<const ChartPoint> target_points, double t_n)
    : manifold_(manifold),
      construction_(construction),
      source_(std::move(source)),
      target_(std::move(target)),
      target_count_(target_points.size()),
      t_n_(t_n),
      target_mass_(target_points.size(), 0.0) {
  if (target_.size() != source_.size()) throw ValidationError("transport map: size mismatch");
  displacement_sq_.resize(target_.size());
  for (std::size_t s = 0; s < target_.size(); ++s) {
    if (target_[s] >= target_count_) throw ValidationError("transport map: target out of range");
    const double d = manifold_.geodesic(source_.charts[s], target_points[target_[s]]);
    displacement_sq_[s] = d * d;
    msd_ += source_.weights[s] * d * d;
    target_mass_[target_[s]] += source_.weights[s];
  }
}

double TransportMap::mass_defect() const {
  double worst = 0.0;
  const double ref = 1.0 / static_cast<double>(target_count_);
  for (double m : target_mass_) worst = std::max(worst, std::fabs(m - ref));
  return worst;
}

std::string to_string(TransportMap::Construction c) {
  return c == TransportMap::Construction::monotone_arcs ? "monotone_arcs" : "voronoi_grid";
}

std::string to_string(Coupling c) { return c == Coupling::shared_xi ? "shared_xi" : "independent"; }

TransportMap transport_map(const Manifold& manifold, const PointCloud& cloud,
                           std::size_t resolution) {
  if (!(cloud.manifold() == manifold)) throw ValidationError("transport map: manifold mismatch");
  const std::size_t n = cloud.size();
  if (n == 0) throw ValidationError("transport map: empty cloud");
  if (resolution < 2) throw ValidationError("transport map: resolution must be >= 2");

  QuadratureGrid grid;
  grid.ambient_dim = manifold.ambient_dim();
  std::vector<std::uint32_t> target;
  double t_n = 0.0;
  TransportMap::Construction construction;

  if (manifold.kind() == ManifoldKind::circle) {
    construction = TransportMap::Construction::monotone_arcs;
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
      return cloud.chart(x).a < cloud.chart(y).a;
    });
    // Arc i = [theta0 + 2 pi i / n, theta0 + 2 pi (i + 1) / n) goes to the i-th
    // point in angular order. Its worst displacement is attained at an end,
    // at offsets r_i - theta0 and r_i - 2 pi / n - theta0 with
    // r_i = theta_(i) - 2 pi i / n; theta0 centres the range of these offsets.
    const double h = kTwoPi / static_cast<double>(n);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = cloud.chart(order[i]).a - h * static_cast<double>(i);
      lo = std::min(lo, r - h);
      hi = std::max(hi, r);
    }
    const double theta0 = 0.5 * (lo + hi);
    t_n = std::min(std::numbers::pi, 0.5 * (hi - lo));

    const std::size_t per_arc = (resolution + n - 1) / n;
    const double w = 1.0 / static_cast<double>(n * per_arc);
    grid.coords.reserve(2 * n * per_arc);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t q = 0; q < per_arc; ++q) {
        const double t = wrap_angle(theta0 + h * (static_cast<double>(i) +
                                                  (static_cast<double>(q) + 0.5) /
                                                      static_cast<double>(per_arc)));
        grid.charts.push_back({t, 0.0});
        grid.coords.push_back(std::cos(t));
        grid.coords.push_back(std::sin(t));
        grid.weights.push_back(w);
        target.push_back(order[i]);
      }
    }
  } else {
    construction = TransportMap::Construction::voronoi_grid;
    const auto g = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(resolution))));
    grid = manifold.quadrature_grid(g);
    target.resize(grid.size());
    for (std::size_t s = 0; s < grid.size(); ++s) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = manifold.geodesic(grid.charts[s], cloud.chart(j));
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(j);
        }
      }
      target[s] = arg;
      t_n = std::max(t_n, best);
    }
    const double half_diag = Manifold::kTorusRadius * (kTwoPi / static_cast<double>(g)) *
                             std::numbers::sqrt2 / 2.0;
    t_n = std::min(t_n + half_diag, manifold.diameter());
  }

  return TransportMap(manifold, construction, std::move(grid), std::move(target), cloud.charts(),
                      t_n);
}

TL2Point TL2Point::on_cloud(const PointCloud& cloud, std::span<const double> values) {
  if (values.size() != cloud.size()) throw ValidationError("TL2: one value per cloud point");
  TL2Point p;
  p.manifold = cloud.manifold();
  p.coords = cloud.coords();
  p.weights.assign(cloud.size(), cloud.point_mass());
  p.values.assign(values.begin(), values.end());
  return p;
}

TL2Point TL2Point::on_grid(const QuadratureGrid& grid, const Manifold& manifold,
                           std::span<const double> values) {
  if (values.size() != grid.size()) throw ValidationError("TL2: one value per grid node");
  TL2Point p;
  p.manifold = manifold;
  p.coords = grid.coords;
  p.weights = grid.weights;
  p.values.assign(values.begin(), values.end());
  return p;
}

namespace {

void check_pair(const TL2Point& a, const TL2Point& b) {
  if (!(a.manifold == b.manifold)) throw ValidationError("TL2: points on different manifolds");
  if (a.values.size() != a.size() || b.values.size() != b.size()) {
    throw ValidationError("TL2: values and weights differ in length");
  }
}

double ground_cost(const TL2Point& a, std::size_t i, const TL2Point& b, std::size_t j) {
  const double d = a.manifold.geodesic(a.atom(i), b.atom(j));
  const double df = a.values[i] - b.values[j];
  return d * d + df * df;
}

// Strict total order on points; solving in a canonical order makes the
// distance symmetric bit for bit.
bool precedes(const TL2Point& a, const TL2Point& b) {
  return std::tie(a.weights, a.coords, a.values) < std::tie(b.weights, b.coords, b.values);
}

}  // namespace

double tl2_distance(const TL2Point& a, const TL2Point& b, const Tl2Options& options) {
  check_pair(a, b);
  if (precedes(b, a)) return tl2_distance(b, a, options);
  if (a.size() > options.max_atoms || b.size() > options.max_atoms) {
    std::ostringstream msg;
    msg << "TL2: exact OT limited to " << options.max_atoms << " atoms per side (got " << a.size()
        << " and " << b.size() << "); use the map bound";
    throw ValidationError(msg.str());
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ground_cost(a, i, b, j);
  const auto sol = solve_ot(a.weights, b.weights, cost);
  return std::sqrt(std::max(0.0, sol.cost));
}

double tl2_distance(const TL2Point& a, const TL2Point& b,
                    std::span<const std::uint32_t> assignment) {
  check_pair(a, b);
  if (assignment.size() != a.size()) throw ValidationError("TL2: one assignment per atom");
  std::vector<double> pushed(b.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::uint32_t j = assignment[i];
    if (j >= b.size()) throw ValidationError("TL2: assignment out of range");
    pushed[j] += a.weights[i];
    total += a.weights[i] * ground_cost(a, i, b, j);
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (std::fabs(pushed[j] - b.weights[j]) > 1e-9) {
      throw ValidationError("TL2: assignment does not push the source weights onto the target");
    }
  }
  return std::sqrt(total);
}

double tl2_distance(const TL2Point& a, const TL2Point& b, Tl2Method method,
                    std::span<const std::uint32_t> assignment, const Tl2Options& options) {
  if (method == Tl2Method::exact_ot) return tl2_distance(a, b, options);
  if (assignment.empty()) throw ValidationError("TL2: map bound needs an assignment");
  return tl2_distance(a, b, assignment);
}

double transported_distance(const TransportMap& map, std::span<const double> source_values,
                            std::span<const double> target_values) {
  const auto& src = map.source();
  if (source_values.size() != src.size() || target_values.size() != map.target_count()) {
    throw ValidationError("transported distance: value lengths do not match the map");
  }
  const auto& target = map.target();
  const auto& disp = map.displacement_sq();
  double total = 0.0;
  for (std::size_t s = 0; s < src.size(); ++s) {
    const double df = source_values[s] - target_values[target[s]];
    total += src.weights[s] * (disp[s] + df * df);
  }
  return std::sqrt(total);
}

Eigen::VectorXd projection_coefficients(std::span<const double> continuum_coefficients,
                                        std::span<const double> graph_eigenvalues,
                                        std::span<const double> continuum_eigenvalues,
                                        double alpha, double s) {
  const std::size_t k = std::min({continuum_coefficients.size(), graph_eigenvalues.size(),
                                  continuum_eigenvalues.size()});
  Eigen::VectorXd out(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const double num = alpha + continuum_eigenvalues[i];
    const double den = alpha + graph_eigenvalues[i];
    if (!(num > 0.0) || !(den > 0.0)) {
      throw DegenerateCovarianceError("projection: alpha + lambda must be positive");
    }
    out(static_cast<Eigen::Index>(i)) = std::pow(num / den, s / 4.0) * continuum_coefficients[i];
  }
  return out;
}

Eigen::VectorXd projection(std::span<const double> continuum_coefficients,
                           const GraphSpectrum& graph_spec, const ContinuumSpectrum& cont_spec,
                           double alpha, double s) {
  const Eigen::VectorXd c = projection_coefficients(
      continuum_coefficients, {graph_spec.eigenvalues.data(), graph_spec.size()},
      cont_spec.eigenvalues(), alpha, s);
  return graph_spec.vectors.leftCols(c.size()) * c;
}

DistanceEstimate measure_distance_tl2(const NodalGaussianField& on_cloud,
                                      const NodalGaussianField& on_manifold,
                                      const TransportMap& map, std::size_t n_pairs,
                                      std::uint64_t seed, Coupling coupling) {
  if (n_pairs < 2) throw ValidationError("distance: need at least two pairs");
  if (on_cloud.basis_values.rows() != static_cast<Eigen::Index>(map.target_count()) ||
      on_manifold.basis_values.rows() != static_cast<Eigen::Index>(map.source().size())) {
    throw ValidationError("distance: basis rows do not match the transport map nodes");
  }
  if (on_cloud.basis_values.cols() != static_cast<Eigen::Index>(on_cloud.law.dim()) ||
      on_manifold.basis_values.cols() != static_cast<Eigen::Index>(on_manifold.law.dim())) {
    throw ValidationError("distance: basis columns do not match the coefficient law");
  }
  const std::size_t kmax = std::max(on_cloud.law.dim(), on_manifold.law.dim());
  constexpr std::size_t kBatch = 32;
  std::vector<double> d;
  d.reserve(n_pairs);
  for (std::size_t start = 0; start < n_pairs; start += kBatch) {
    const std::size_t len = std::min(kBatch, n_pairs - start);
    Eigen::MatrixXd xa(static_cast<Eigen::Index>(kmax), static_cast<Eigen::Index>(len));
    Eigen::MatrixXd xb(static_cast<Eigen::Index>(kmax), static_cast<Eigen::Index>(len));
    for (std::size_t r = 0; r < len; ++r) {
      const std::uint64_t pair = start + r;
      xa.col(static_cast<Eigen::Index>(r)) =
          standard_normals(kmax, stream_key(seed, Stage::prior, pair, 0));
      xb.col(static_cast<Eigen::Index>(r)) =
          coupling == Coupling::shared_xi
              ? Eigen::VectorXd(xa.col(static_cast<Eigen::Index>(r)))
              : standard_normals(kmax, stream_key(seed, Stage::prior, pair, 1));
    }
    const Eigen::MatrixXd fc = on_cloud.basis_values * on_cloud.law.draw_batch(xa);
    const Eigen::MatrixXd fm = on_manifold.basis_values * on_manifold.law.draw_batch(xb);
    for (std::size_t r = 0; r < len; ++r) {
      const auto c = static_cast<Eigen::Index>(r);
      d.push_back(transported_distance(map, {fm.col(c).data(), static_cast<std::size_t>(fm.rows())},
                                       {fc.col(c).data(), static_cast<std::size_t>(fc.rows())}));
    }
  }
  DistanceEstimate out;
  out.n_pairs = n_pairs;
  out.coupling = coupling;
  out.method = "map_bound";
  const double n = static_cast<double>(n_pairs);
  out.estimate = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - out.estimate) * (x - out.estimate);
  out.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  return out;
}

}  // namespace gbip
