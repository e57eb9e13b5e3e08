#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "gbip/errors.hpp"
#include "gbip/ot.hpp"
#include "gbip/rng.hpp"

using namespace gbip;

namespace {

Eigen::MatrixXd random_cost(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() * 10.0;
  return m;
}

double brute_force_assignment(const Eigen::MatrixXd& c) {
  std::vector<int> perm(static_cast<std::size_t>(c.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i) s += c(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("assignment matches brute force over permutations") {
  for (int n = 1; n <= 7; ++n) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto c = random_cost(n, n, 100 * n + seed);
      const auto sol = solve_assignment(c);
      CHECK(sol.cost == doctest::Approx(brute_force_assignment(c)).epsilon(1e-12));
      std::vector<std::size_t> cols = sol.assignment;
      std::sort(cols.begin(), cols.end());
      for (std::size_t i = 0; i < cols.size(); ++i) CHECK(cols[i] == i);
      CHECK(sol.dual_violation <= 1e-12);
    }
  }
}

TEST_CASE("rectangular assignment leaves columns unused") {
  const auto c = random_cost(3, 6, 9);
  const auto sol = solve_assignment(c);
  // Brute force: every injective map of 3 rows into 6 columns.
  double best = 1e300;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b)
      for (int d = 0; d < 6; ++d)
        if (a != b && b != d && a != d) best = std::min(best, c(0, a) + c(1, b) + c(2, d));
  CHECK(sol.cost == doctest::Approx(best));
  CHECK_THROWS_AS(solve_assignment(random_cost(4, 3, 1)), ValidationError);
}

TEST_CASE("transport with rational weights equals assignment on split atoms") {
  // a = (2, 1, 3)/6, b = (3, 1, 2)/6: split into six unit atoms per side.
  const std::vector<int> ua = {2, 1, 3}, ub = {3, 1, 2};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = random_cost(3, 3, seed);
    std::vector<double> a, b;
    for (int x : ua) a.push_back(x / 6.0);
    for (int x : ub) b.push_back(x / 6.0);
    const auto sol = solve_transport(a, b, c);
    std::vector<int> ra, rb;
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < ua[static_cast<std::size_t>(i)]; ++r) ra.push_back(i);
    for (int j = 0; j < 3; ++j)
      for (int r = 0; r < ub[static_cast<std::size_t>(j)]; ++r) rb.push_back(j);
    Eigen::MatrixXd split(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) split(i, j) = c(ra[static_cast<std::size_t>(i)], rb[static_cast<std::size_t>(j)]) / 6.0;
    CHECK(sol.cost == doctest::Approx(brute_force_assignment(split)).epsilon(1e-12));
    CHECK(sol.dual_violation <= 1e-12);
    CHECK(sol.duality_gap <= 1e-12);
    // Plan marginals.
    std::vector<double> row(3, 0.0), col(3, 0.0);
    for (const auto& e : sol.plan) {
      row[e.row] += e.mass;
      col[e.col] += e.mass;
    }
    for (int i = 0; i < 3; ++i) {
      CHECK(row[static_cast<std::size_t>(i)] == doctest::Approx(a[static_cast<std::size_t>(i)]));
      CHECK(col[static_cast<std::size_t>(i)] == doctest::Approx(b[static_cast<std::size_t>(i)]));
    }
  }
}

TEST_CASE("solve_ot certifies optimality on random unbalanced-count problems") {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    const int r = 2 + t % 5, c = 3 + t % 4;
    std::vector<double> a(static_cast<std::size_t>(r)), b(static_cast<std::size_t>(c));
    for (auto& x : a) x = 0.1 + rng.uniform();
    for (auto& x : b) x = 0.1 + rng.uniform();
    const double sa = std::accumulate(a.begin(), a.end(), 0.0), sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (auto& x : a) x /= sa;
    for (auto& x : b) x /= sb;
    const auto sol = solve_ot(a, b, random_cost(r, c, 300 + t));
    CHECK(sol.duality_gap <= 1e-9);
    CHECK(sol.dual_violation <= 1e-9);
  }
}

TEST_CASE("transport rejects mismatched masses") {
  const std::vector<double> a = {0.5, 0.5}, b = {0.7, 0.7};
  CHECK_THROWS_AS(solve_transport(a, b, random_cost(2, 2, 1)), ValidationError);
}
