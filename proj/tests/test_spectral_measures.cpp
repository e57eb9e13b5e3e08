#include "doctest.h"

#include <cmath>
#include <limits>

#include "gbip/errors.hpp"
#include "gbip/graph.hpp"
#include "gbip/rng.hpp"
#include "gbip/spectral_measures.hpp"

using namespace gbip;

namespace {

DiagonalGaussianMeasure diag(std::vector<double> m, std::vector<double> s, std::string basis = "b") {
  return DiagonalGaussianMeasure(std::move(basis),
                                 Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size())),
                                 Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
}

Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Eigen::MatrixXd x(rows, cols);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

}  // namespace

TEST_CASE("prior standard deviations (alpha + lambda)^(-s/4)") {
  const std::vector<double> lam = {0.0, 1.0, 1.0, 4.0};
  const auto p = gaussian_prior("b", lam, 1.0, 4.0, 1);
  for (std::size_t i = 0; i < lam.size(); ++i)
    CHECK(p.stds()(static_cast<Eigen::Index>(i)) == doctest::Approx(1.0 / (1.0 + lam[i])));
  CHECK(p.means().isZero());
  CHECK_THROWS_AS(gaussian_prior("b", lam, 1.0, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(gaussian_prior("b", lam, 0.0, 4.0, 1), DegenerateCovarianceError);
}

TEST_CASE("continuum prior truncation honours the tail target") {
  const auto m = Manifold::circle();
  const auto p = continuum_prior(m, 1.0, 4.0, 0, 1e-6);
  CHECK(p.tail_bound() < 1e-6);
  const auto spec = continuum_spectrum(m, p.truncation());
  CHECK(spec.complete_cluster_prefix(p.truncation()) == p.truncation());
  // One complete cluster fewer would miss the target.
  const std::size_t shorter = p.truncation() - 2;
  CHECK(spectral_tail_bound(m, shorter, 1.0, 2.0) >= 1e-6);
  CHECK(continuum_prior(m, 1.0, 4.0, 9).truncation() == 9);
}

TEST_CASE("KL divergence: one-dimensional closed form") {
  const double m1 = 0.3, s1 = 0.7, m0 = -0.2, s0 = 1.3;
  const double expect = std::log(s0 / s1) + (s1 * s1 + (m1 - m0) * (m1 - m0)) / (2 * s0 * s0) - 0.5;
  CHECK(kl_divergence(diag({m1}, {s1}), diag({m0}, {s0})) == doctest::Approx(expect).epsilon(1e-14));
  Eigen::MatrixXd cov(1, 1);
  cov(0, 0) = s1 * s1;
  CHECK(kl_divergence(Eigen::VectorXd::Constant(1, m1), cov, diag({m0}, {s0})) ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("KL divergence: nonnegative, zero on the diagonal, infinite when singular") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> ma(5), sa(5), mb(5), sb(5);
    for (int i = 0; i < 5; ++i) {
      ma[i] = rng.normal();
      mb[i] = rng.normal();
      sa[i] = 0.1 + rng.uniform();
      sb[i] = 0.1 + rng.uniform();
    }
    const auto a = diag(ma, sa), b = diag(mb, sb);
    CHECK(kl_divergence(a, b) >= 0.0);
    CHECK(kl_divergence(a, a) == doctest::Approx(0.0).scale(1.0));
  }
  CHECK(kl_divergence(diag({0, 0}, {1, 0}), diag({0, 0}, {1, 1})) ==
        std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(kl_divergence(diag({0}, {1}, "x"), diag({0}, {1}, "y")), ValidationError);
}

TEST_CASE("dense KL agrees with the diagonal formula and detects singular covariance") {
  const auto pi = diag({0.1, -0.2, 0.0}, {1.0, 0.5, 0.25});
  const auto nu = diag({0.3, 0.1, -0.1}, {0.9, 0.6, 0.2});
  const Eigen::MatrixXd cov = nu.stds().cwiseAbs2().asDiagonal();
  CHECK(kl_divergence(nu.means(), cov, pi) == doctest::Approx(kl_divergence(nu, pi)).epsilon(1e-13));
  Eigen::MatrixXd sing = Eigen::MatrixXd::Ones(3, 3);
  CHECK(kl_divergence(nu.means(), sing, pi) == std::numeric_limits<double>::infinity());
}

TEST_CASE("W2 between diagonal Gaussians") {
  const auto a = diag({0.0, 1.0}, {1.0, 2.0}), b = diag({3.0, 1.0}, {1.0, 0.0});
  CHECK(wasserstein2_gaussian(a, b) == doctest::Approx(std::sqrt(9.0 + 4.0)));
  CHECK(wasserstein2_gaussian(a, a) == 0.0);
}

TEST_CASE("low-rank law covariance equals root times root transpose") {
  const Eigen::Index k = 7;
  const Eigen::VectorXd mean = Eigen::VectorXd::LinSpaced(k, -1, 1);
  const Eigen::VectorXd stds = Eigen::VectorXd::LinSpaced(k, 1.0, 0.2);
  const Eigen::MatrixXd v = random_orthonormal(k, 3, 11);
  Eigen::VectorXd shrink(3);
  shrink << 0.9, 0.5, 0.1;
  const auto law = CoefficientLaw::diagonal_low_rank(mean, stds, v, shrink);
  const Eigen::MatrixXd root =
      stds.asDiagonal() * (Eigen::MatrixXd::Identity(k, k) - v * shrink.asDiagonal() * v.transpose());
  CHECK((law.covariance() - root * root.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((law.marginal_variances() - law.covariance().diagonal()).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::VectorXd xi = standard_normals(k, 4);
  CHECK((law.draw(xi) - (mean + root * xi)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("input rotation changes the pairing, not the law") {
  const Eigen::Index k = 5;
  const auto law = CoefficientLaw::diagonal(Eigen::VectorXd::Zero(k), Eigen::VectorXd::LinSpaced(k, 1, 0.5));
  Eigen::Matrix2d q;
  const double th = 0.7;
  q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  const auto rotated = law.with_input_rotation({{1, q}});
  CHECK((rotated.covariance() - law.covariance()).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::VectorXd xi = standard_normals(k, 8);
  Eigen::VectorXd z = xi;
  z.segment(1, 2) = q * xi.segment(1, 2);
  CHECK((rotated.draw(xi) - law.draw(z)).cwiseAbs().maxCoeff() < 1e-15);
  const Eigen::MatrixXd batch = standard_normals(k * 3, 9).reshaped(k, 3);
  const Eigen::MatrixXd draws = rotated.draw_batch(batch);
  for (Eigen::Index c = 0; c < 3; ++c)
    CHECK((draws.col(c) - rotated.draw(batch.col(c))).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("scaled law multiplies the draw") {
  const auto law = CoefficientLaw::diagonal(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Constant(3, 2.0));
  const Eigen::Vector3d h(1.0, 0.5, 0.0);
  const Eigen::VectorXd xi = standard_normals(3, 1);
  CHECK((law.scaled(h).draw(xi) - h.cwiseProduct(law.draw(xi))).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("coupled sampling shares xi by mode") {
  const auto a = diag({0, 0, 0}, {1, 2, 3}), b = diag({1, 1}, {2, 4});
  const auto [xa, xb] = sample_coupled(a, b, 5);
  CHECK(xb(0) - 1.0 == doctest::Approx(2.0 * xa(0)));
  CHECK(xb(1) - 1.0 == doctest::Approx(2.0 * xa(1)));
  CHECK(sample_coefficients(a, 5) == sample_coefficients(a, 5));
}

TEST_CASE("synthesize and analyze are inverse on the graph basis") {
  const std::size_t n = 200;
  const auto cloud = sample(Manifold::circle(), n, 1);
  const auto spec = graph_spectrum(graph_laplacian(build_graph(cloud, 0.6)), n);
  const Eigen::VectorXd c = standard_normals(n, 2);
  CHECK((analyze(spec, synthesize(spec, c)) - c).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("J functional: exact, dense and Monte Carlo forms agree") {
  const auto pi = diag({0, 0, 0}, {1.0, 0.5, 0.25});
  const auto nu = diag({0.2, -0.1, 0.05}, {0.8, 0.4, 0.2});
  LinearGaussianPotential phi;
  phi.forward = Eigen::MatrixXd(2, 3);
  phi.forward << 1, 0.5, 0.2, -0.3, 1, 0.1;
  phi.data = Eigen::Vector2d(0.4, -0.2);
  phi.noise_std = 0.3;
  const auto exact = j_functional(nu, pi, phi);
  const Eigen::MatrixXd cov = nu.stds().cwiseAbs2().asDiagonal();
  CHECK(j_functional(nu.means(), cov, pi, phi).value == doctest::Approx(exact.value).epsilon(1e-13));
  const auto mc = j_functional(nu, pi, [&](const Eigen::VectorXd& u) { return phi(u); }, 20000, 3);
  CHECK(std::fabs(mc.value - exact.value) < 4.0 * mc.stderr_);
}
