#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "gbip/kernels.hpp"
#include "gbip/rng.hpp"

using namespace gbip;
namespace k = gbip::kernels;

namespace {

std::vector<double> randoms(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Sizes straddling the 4-lane width and its remainders.
const std::size_t kSizes[] = {0, 1, 3, 4, 5, 7, 8, 17, 64, 1001};

}  // namespace

TEST_CASE("scalar reference kernels match direct loops") {
  const auto a = randoms(37, 1), b = randoms(37, 2);
  double dot = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    sq += (a[i] - b[i]) * (a[i] - b[i]);
  }
  CHECK(k::scalar::dot(a, b) == doctest::Approx(dot).epsilon(1e-14));
  CHECK(k::scalar::squared_distance(a, b) == doctest::Approx(sq).epsilon(1e-14));
  auto y = b;
  k::scalar::axpy(0.5, a, y);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(y[i] == b[i] + 0.5 * a[i]);
}

TEST_CASE("dispatch honours set_active_isa") {
  k::ScopedIsa scoped(k::Isa::scalar);
  CHECK(k::active_isa() == k::Isa::scalar);
  CHECK(std::string(k::isa_name(k::Isa::scalar)) == "scalar");
}

#if GBIP_HAVE_AVX2_KERNELS
TEST_CASE("avx2 kernels are equivalent to the scalar reference") {
  if (!k::isa_supported(k::Isa::avx2)) {
    MESSAGE("CPU lacks AVX2; equivalence not exercised");
    return;
  }
  for (const std::size_t n : kSizes) {
    CAPTURE(n);
    const auto a = randoms(n, 10 + n), b = randoms(n, 20 + n);
    const double scale = 1.0 + k::scalar::dot(a, a) + k::scalar::dot(b, b);
    CHECK(std::fabs(k::avx2::dot(a, b) - k::scalar::dot(a, b)) <= 1e-13 * scale);
    CHECK(std::fabs(k::avx2::squared_distance(a, b) - k::scalar::squared_distance(a, b)) <=
          1e-13 * scale);
    auto ys = b, yv = b;
    k::scalar::axpy(-1.25, a, ys);
    k::avx2::axpy(-1.25, a, yv);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(ys[i] - yv[i]) <= 1e-15 * (1 + std::fabs(ys[i])));
  }
}

TEST_CASE("avx2 neighbour search selects exactly the scalar set") {
  if (!k::isa_supported(k::Isa::avx2)) return;
  for (const std::size_t n : kSizes) {
    for (std::size_t dim : {2u, 4u}) {
      std::vector<std::vector<double>> cols;
      std::vector<const double*> ptrs;
      for (std::size_t d = 0; d < dim; ++d) cols.push_back(randoms(n, 100 * d + n));
      for (auto& c : cols) ptrs.push_back(c.data());
      for (std::size_t begin : {std::size_t{0}, n / 3}) {
        const std::vector<double> q = randoms(dim, 7 + begin);
        for (double r2 : {0.0, 0.5, 2.0, 100.0}) {
          std::vector<std::uint32_t> s, v;
          k::scalar::neighbors_within(ptrs, begin, n, q, r2, s);
          k::avx2::neighbors_within(ptrs, begin, n, q, r2, v);
          CHECK(s == v);
        }
      }
    }
  }
}

TEST_CASE("avx2 assignment relaxation matches the scalar sweep") {
  if (!k::isa_supported(k::Isa::avx2)) return;
  for (const std::size_t n : kSizes) {
    if (n == 0) continue;
    CAPTURE(n);
    const auto cost = randoms(n, 3 + n), pot = randoms(n, 5 + n);
    std::vector<std::int64_t> used(n, 0);
    for (std::size_t j = 0; j < n; j += 3) used[j] = -1;
    std::vector<double> slack_s(n, std::numeric_limits<double>::infinity());
    for (std::size_t j = 1; j < n; j += 4) slack_s[j] = -0.1;  // some entries already tighter
    auto slack_v = slack_s;
    std::vector<std::int64_t> way_s(n, -7), way_v(n, -7);
    const auto rs = k::scalar::assignment_relax(cost, 0.3, pot, slack_s, way_s, used, 42);
    const auto rv = k::avx2::assignment_relax(cost, 0.3, pot, slack_v, way_v, used, 42);
    CHECK(rs.delta == rv.delta);
    CHECK(rs.column == rv.column);
    CHECK(slack_s == slack_v);
    CHECK(way_s == way_v);
  }
}

TEST_CASE("relaxation ties resolve to the first column in both variants") {
  if (!k::isa_supported(k::Isa::avx2)) return;
  const std::size_t n = 9;
  std::vector<double> cost(n, 1.0), pot(n, 0.0);
  std::vector<std::int64_t> used(n, 0);
  used[0] = -1;
  std::vector<double> ss(n, std::numeric_limits<double>::infinity()), sv = ss;
  std::vector<std::int64_t> ws(n, 0), wv(n, 0);
  const auto rs = k::scalar::assignment_relax(cost, 0.0, pot, ss, ws, used, 1);
  const auto rv = k::avx2::assignment_relax(cost, 0.0, pot, sv, wv, used, 1);
  CHECK(rs.column == 1);
  CHECK(rv.column == 1);
}
#endif
