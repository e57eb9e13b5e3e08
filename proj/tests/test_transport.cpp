#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gbip/errors.hpp"
#include "gbip/graph.hpp"
#include "gbip/rng.hpp"
#include "gbip/spectral_measures.hpp"
#include "gbip/transport.hpp"

using namespace gbip;
using std::numbers::pi;

namespace {

TL2Point random_point(const Manifold& m, std::size_t n, std::uint64_t seed, bool uniform) {
  const auto cloud = sample(m, n, seed);
  Rng rng(stream_key(seed, Stage::test));
  TL2Point p;
  p.manifold = m;
  p.coords = cloud.coords();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p.weights.push_back(uniform ? 1.0 : 0.2 + rng.uniform());
    total += p.weights.back();
    p.values.push_back(rng.normal());
  }
  for (auto& w : p.weights) w /= total;
  return p;
}

double angle_dist(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 2 * pi);
  return std::min(d, 2 * pi - d);
}

}  // namespace

TEST_CASE("circle map: exact masses and optimal sup displacement") {
  const auto m = Manifold::circle();
  for (std::size_t n : {3u, 7u, 50u}) {
    const auto cloud = sample(m, n, 21 + n);
    const auto map = transport_map(m, cloud, 2048);
    CHECK(map.mass_defect() < 1e-12);
    double worst = 0.0;
    for (double d2 : map.displacement_sq()) worst = std::max(worst, std::sqrt(d2));
    CHECK(worst <= map.t_n() + 1e-12);

    // Oracle: monotone maps sending arc i of a rotated uniform partition to
    // the i-th point in angular order, rotation on a fine grid.
    std::vector<double> th;
    for (std::size_t i = 0; i < n; ++i) th.push_back(cloud.chart(i).a);
    std::sort(th.begin(), th.end());
    const double h = 2 * pi / static_cast<double>(n);
    double best = 1e300;
    const int grid = 20000;
    for (int g = 0; g < grid; ++g) {
      const double t0 = 2 * pi * g / grid;
      double sup = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double lo = t0 + h * static_cast<double>(i), hi = lo + h;
        const double c = th[i];
        // Sup distance from the arc to c: the endpoints, or pi when the arc
        // contains the antipode of c.
        const double off = std::fmod(c + pi - lo + 8 * pi, 2 * pi);
        sup = std::max({sup, angle_dist(lo, c), angle_dist(hi, c), off <= h ? pi : 0.0});
      }
      best = std::min(best, sup);
    }
    CAPTURE(n);
    CHECK(map.t_n() <= best + 1e-12);
    CHECK(map.t_n() >= best - 2 * pi / grid - 1e-12);
  }
}

TEST_CASE("torus map is a Voronoi surrogate with small mass defect") {
  const auto m = Manifold::flat_torus();
  const auto cloud = sample(m, 100, 3);
  const auto map = transport_map(m, cloud, 40000);
  CHECK(map.construction() == TransportMap::Construction::voronoi_grid);
  double total = 0.0;
  for (double x : map.target_mass()) total += x;
  CHECK(total == doctest::Approx(1.0));
  double worst = 0.0;
  for (double d2 : map.displacement_sq()) worst = std::max(worst, std::sqrt(d2));
  CHECK(worst <= map.t_n());
  // Voronoi cells are uneven; the defect is reported, not hidden.
  CHECK(map.mass_defect() > 0.0);
}

TEST_CASE("TL2 metric axioms on random atomic triples") {
  const auto m = Manifold::circle();
  Rng rng(99);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const auto na = 1 + static_cast<std::size_t>(rng.uniform() * 64);
    const auto nb = 1 + static_cast<std::size_t>(rng.uniform() * 64);
    const auto nc = 1 + static_cast<std::size_t>(rng.uniform() * 64);
    const auto a = random_point(m, na, 3 * t, t % 2 == 0);
    const auto b = random_point(m, nb, 3 * t + 1, t % 3 == 0);
    const auto c = random_point(m, nc, 3 * t + 2, false);
    const double ab = tl2_distance(a, b), ba = tl2_distance(b, a);
    const double bc = tl2_distance(b, c), ac = tl2_distance(a, c);
    CHECK(ab == ba);
    CHECK(ac <= ab + bc + 1e-9);
    CHECK(tl2_distance(a, a) == 0.0);
    CHECK(ab > 0.0);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("TL2 on the torus is symmetric and separates values") {
  const auto m = Manifold::flat_torus();
  auto a = random_point(m, 20, 1, true);
  auto b = a;
  CHECK(tl2_distance(a, b) == 0.0);
  b.values[3] += 1.0;
  CHECK(tl2_distance(a, b) == doctest::Approx(std::sqrt(1.0 / 20.0)));
}

TEST_CASE("exact OT never exceeds the map bound") {
  const auto m = Manifold::circle();
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 40);
    const auto a = random_point(m, n, 700 + t, true), b = random_point(m, n, 900 + t, true);
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1))]);
    CHECK(tl2_distance(a, b) <= tl2_distance(a, b, perm) + 1e-12);
  }
}

TEST_CASE("TL2 rejects mismatched input") {
  const auto a = random_point(Manifold::circle(), 5, 1, true);
  const auto b = random_point(Manifold::flat_torus(), 5, 1, true);
  CHECK_THROWS_AS(tl2_distance(a, b), ValidationError);
  const auto big = random_point(Manifold::circle(), 600, 2, true);
  CHECK_THROWS_AS(tl2_distance(big, a), ValidationError);
  const std::vector<std::uint32_t> bad = {0, 0, 0, 0, 0};
  CHECK_THROWS_AS(tl2_distance(a, a, bad), ValidationError);
}

TEST_CASE("transported distance of equal constants is the transport cost") {
  const auto m = Manifold::circle();
  const auto cloud = sample(m, 40, 2);
  const auto map = transport_map(m, cloud, 4000);
  const std::vector<double> f(map.source().size(), 2.0), g(40, 2.0);
  CHECK(transported_distance(map, f, g) == doctest::Approx(std::sqrt(map.mean_squared_displacement())));
}

TEST_CASE("P_n pushes the continuum prior onto the graph prior") {
  const std::size_t n = 300, k = 9;
  const auto m = Manifold::circle();
  const auto cloud = sample(m, n, 6);
  const auto spec = graph_spectrum(graph_laplacian(build_graph(cloud, 0.5)), k);
  const auto cont = continuum_spectrum(m, k);
  const auto prior_c = continuum_prior(m, 1.0, 4.0, k);
  const auto prior_n = graph_prior(spec, 1.0, 4.0, 1);
  const std::size_t draws = 10000;
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < draws; ++r) {
    const Eigen::VectorXd a = sample_coefficients(prior_c, stream_key(1, Stage::test, r));
    const Eigen::VectorXd p = projection_coefficients({a.data(), k}, {spec.eigenvalues.data(), k},
                                                      cont.eigenvalues(), 1.0, 4.0);
    sum_sq += p.cwiseAbs2();
  }
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(k); ++i) {
    const double sd = std::sqrt(sum_sq(i) / static_cast<double>(draws));
    CHECK(std::fabs(sd / prior_n.stds()(i) - 1.0) < 0.05);
  }
  const Eigen::VectorXd f = projection(std::vector<double>(k, 0.0), spec, cont, 1.0, 4.0);
  CHECK(f.isZero());
}

TEST_CASE("measure distance reduces to the transport cost for point masses") {
  const auto m = Manifold::circle();
  const auto cloud = sample(m, 100, 1);
  const auto map = transport_map(m, cloud, 1000);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  const NodalGaussianField a{Eigen::MatrixXd::Ones(100, 3), CoefficientLaw::diagonal(zero, zero)};
  const NodalGaussianField b{Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(map.source().size()), 3),
                             CoefficientLaw::diagonal(zero, zero)};
  const auto d = measure_distance_tl2(a, b, map, 10, 1, Coupling::shared_xi);
  CHECK(d.estimate == doctest::Approx(std::sqrt(map.mean_squared_displacement())));
  CHECK(d.stderr_ == doctest::Approx(0.0).scale(1.0));
  const auto e = measure_distance_tl2(a, b, map, 10, 1, Coupling::independent);
  CHECK(e.estimate == doctest::Approx(d.estimate));
  CHECK_THROWS_AS(measure_distance_tl2(a, b, map, 1, 1, Coupling::shared_xi), ValidationError);
}
