#include "doctest.h"

#include <cmath>
#include <numbers>

#include "gbip/errors.hpp"
#include "gbip/manifold.hpp"

using namespace gbip;
using std::numbers::pi;

TEST_CASE("volumes and length scales") {
  CHECK(Manifold::circle().volume() == doctest::Approx(2 * pi));
  CHECK(Manifold::flat_torus().volume() == doctest::Approx(2 * pi * pi));
  CHECK(Manifold::circle().length_scale() == doctest::Approx(2 * pi));
  CHECK(Manifold::flat_torus().length_scale() == doctest::Approx(std::sqrt(2.0) * pi));
  CHECK(Manifold::circle().diameter() == doctest::Approx(pi));
}

TEST_CASE("embedding, chart and membership round-trip") {
  for (const auto m : {Manifold::circle(), Manifold::flat_torus()}) {
    const ChartPoint c{1.25, 4.5};
    const auto x = m.embed(c);
    CHECK(m.contains(x));
    const auto back = m.chart(x);
    CHECK(back.a == doctest::Approx(c.a));
    if (m.intrinsic_dim() == 2) CHECK(back.b == doctest::Approx(c.b));
    auto off = x;
    off[0] += 1e-3;
    CHECK_FALSE(m.contains(off));
    CHECK_THROWS_AS(m.geodesic(off, x), DomainError);
  }
}

TEST_CASE("geodesic distances") {
  const auto c = Manifold::circle();
  CHECK(c.geodesic(ChartPoint{0.1, 0}, ChartPoint{2 * pi - 0.1, 0}) == doctest::Approx(0.2));
  CHECK(c.geodesic(ChartPoint{0, 0}, ChartPoint{pi, 0}) == doctest::Approx(pi));
  const auto t = Manifold::flat_torus();
  // Flat metric r^2 (da^2 + db^2), r = 1/sqrt(2).
  CHECK(t.geodesic(ChartPoint{0, 0}, ChartPoint{0.3, 0.4}) ==
        doctest::Approx(0.5 / std::sqrt(2.0)));
  CHECK(t.geodesic(ChartPoint{0.1, 0}, ChartPoint{2 * pi - 0.1, 0}) ==
        doctest::Approx(0.2 / std::sqrt(2.0)));
}

TEST_CASE("sampling is nested and deterministic") {
  const auto m = Manifold::flat_torus();
  const auto big = sample(m, 200, 9);
  const auto small = sample(m, 50, 9);
  for (std::size_t i = 0; i < small.coords().size(); ++i) CHECK(small.coords()[i] == big.coords()[i]);
  const auto other = sample(m, 50, 10);
  CHECK(other.coords() != small.coords());
  for (std::size_t i = 0; i < big.size(); ++i) CHECK(m.contains(big.point(i)));
}

TEST_CASE("continuum eigenvalues follow the closed forms") {
  const auto c = continuum_spectrum(Manifold::circle(), 9);
  const double expect_c[] = {0, 1, 1, 4, 4, 9, 9, 16, 16};
  for (std::size_t i = 0; i < 9; ++i) CHECK(c.eigenvalue(i) == expect_c[i]);
  const auto t = continuum_spectrum(Manifold::flat_torus(), 13);
  // 2 (j^2 + l^2): 0, then 2 (x4), 4 (x4), 8 (x4).
  const double expect_t[] = {0, 2, 2, 2, 2, 4, 4, 4, 4, 8, 8, 8, 8};
  for (std::size_t i = 0; i < 13; ++i) CHECK(t.eigenvalue(i) == expect_t[i]);
  CHECK(t.complete_cluster_prefix(7) == 5);
  CHECK(c.complete_cluster_prefix(4) == 3);
}

TEST_CASE("eigenfunctions are orthonormal and satisfy -Delta psi = lambda psi") {
  for (const auto m : {Manifold::circle(), Manifold::flat_torus()}) {
    const std::size_t k = m.intrinsic_dim() == 1 ? 11 : 21;
    const auto spec = continuum_spectrum(m, k);
    const auto grid = m.quadrature_grid(m.intrinsic_dim() == 1 ? 64 : 32);
    const auto v = spec.evaluate(grid.charts, k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < grid.size(); ++p) s += grid.weights[p] * v[p * k + i] * v[p * k + j];
        CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
      }
      for (const ChartPoint c : {ChartPoint{0.3, 1.7}, ChartPoint{5.0, 0.2}})
        CHECK(-spec.laplacian(i, c) ==
              doctest::Approx(spec.eigenvalue(i) * spec.value(i, c)).scale(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("Dirichlet form identity <grad psi_i, grad psi_j> = lambda_i delta_ij") {
  // Integrate -psi_j Delta psi_i (equal to the gradient pairing on a closed manifold).
  const auto m = Manifold::circle();
  const auto spec = continuum_spectrum(m, 7);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      const double e = m.quadrature(
          [&](ChartPoint c) { return -spec.value(j, c) * spec.laplacian(i, c); }, 128);
      CHECK(e == doctest::Approx(i == j ? spec.eigenvalue(i) : 0.0).scale(1.0).epsilon(1e-11));
    }
  }
}

TEST_CASE("spectral tail bound brackets the closed-form series") {
  // sum_j (1 + j^2)^-2 over all integers = (pi/2) (coth pi + pi csch^2 pi).
  const double csch = 1.0 / std::sinh(pi);
  const double exact = 0.5 * pi * (1.0 / std::tanh(pi) + pi * csch * csch);
  const double bound = spectral_tail_bound(Manifold::circle(), 0, 1.0, 2.0);
  CHECK(bound >= exact - 1e-14);
  CHECK(bound - exact < 1e-10);
  CHECK_THROWS_AS(spectral_tail_bound(Manifold::circle(), 0, 1.0, 0.5), ValidationError);
  // Tail past k is the total minus the explicit prefix.
  const auto spec = continuum_spectrum(Manifold::flat_torus(), 9);
  double prefix = 0.0;
  for (std::size_t i = 0; i < 9; ++i) prefix += std::pow(1.0 + spec.eigenvalue(i), -2.0);
  const double total = spectral_tail_bound(Manifold::flat_torus(), 0, 1.0, 2.0);
  const double tail = spectral_tail_bound(Manifold::flat_torus(), 9, 1.0, 2.0);
  CHECK(total - prefix == doctest::Approx(tail).epsilon(1e-10));
}

TEST_CASE("quadrature integrates trigonometric polynomials exactly") {
  const auto m = Manifold::flat_torus();
  const double v = m.quadrature([](ChartPoint c) { return std::pow(std::cos(c.a) * std::sin(c.b), 2); }, 16);
  CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
}
