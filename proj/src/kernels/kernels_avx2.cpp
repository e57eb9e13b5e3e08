// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <limits>

#include "gbip/kernels.hpp"

namespace gbip::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i + 4),
                           _mm256_loadu_pd(b.data() + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y.data() + i);
    _mm256_storeu_pd(y.data() + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x.data() + i), vy));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 =
        _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
    const __m256d d1 =
        _mm256_sub_pd(_mm256_loadu_pd(a.data() + i + 4), _mm256_loadu_pd(b.data() + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d0 =
        _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void neighbors_within(std::span<const double* const> coords, std::size_t begin,
                      std::size_t end, std::span<const double> query, double radius_sq,
                      std::vector<std::uint32_t>& out) {
  const std::size_t dim = coords.size();
  const __m256d r2 = _mm256_set1_pd(radius_sq);
  std::size_t j = begin;
  for (; j + 4 <= end; j += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(coords[0] + j), _mm256_set1_pd(query[0]));
    __m256d acc = _mm256_mul_pd(d, d);
    for (std::size_t k = 1; k < dim; ++k) {
      d = _mm256_sub_pd(_mm256_loadu_pd(coords[k] + j), _mm256_set1_pd(query[k]));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    int mask = _mm256_movemask_pd(_mm256_cmp_pd(acc, r2, _CMP_LE_OQ));
    while (mask != 0) {
      const int lane = __builtin_ctz(static_cast<unsigned>(mask));
      out.push_back(static_cast<std::uint32_t>(j + static_cast<std::size_t>(lane)));
      mask &= mask - 1;
    }
  }
  for (; j < end; ++j) {
    double d = coords[0][j] - query[0];
    double acc = d * d;
    for (std::size_t k = 1; k < dim; ++k) {
      d = coords[k][j] - query[k];
      acc = acc + d * d;
    }
    if (acc <= radius_sq) out.push_back(static_cast<std::uint32_t>(j));
  }
}

RelaxResult assignment_relax(std::span<const double> cost_row, double row_potential,
                             std::span<const double> col_potential,
                             std::span<double> min_slack, std::span<std::int64_t> way,
                             std::span<const std::int64_t> used_mask,
                             std::int64_t current_col) {
  const std::size_t n = cost_row.size();
  const double inf = std::numeric_limits<double>::infinity();
  const __m256d rp = _mm256_set1_pd(row_potential);
  const __m256d cur = _mm256_castsi256_pd(_mm256_set1_epi64x(current_col));
  __m256d best_val = _mm256_set1_pd(inf);
  __m256d best_idx = _mm256_castsi256_pd(_mm256_setzero_si256());
  __m256i idx = _mm256_setr_epi64x(0, 1, 2, 3);
  const __m256i four = _mm256_set1_epi64x(4);

  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d used = _mm256_castsi256_pd(
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(used_mask.data() + j)));
    const __m256d slack = _mm256_sub_pd(_mm256_sub_pd(_mm256_loadu_pd(cost_row.data() + j), rp),
                                        _mm256_loadu_pd(col_potential.data() + j));
    __m256d ms = _mm256_loadu_pd(min_slack.data() + j);
    const __m256d lt = _mm256_andnot_pd(used, _mm256_cmp_pd(slack, ms, _CMP_LT_OQ));
    ms = _mm256_blendv_pd(ms, slack, lt);
    _mm256_storeu_pd(min_slack.data() + j, ms);
    __m256d w = _mm256_castsi256_pd(
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(way.data() + j)));
    w = _mm256_blendv_pd(w, cur, lt);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(way.data() + j), _mm256_castpd_si256(w));

    const __m256d better = _mm256_andnot_pd(used, _mm256_cmp_pd(ms, best_val, _CMP_LT_OQ));
    best_val = _mm256_blendv_pd(best_val, ms, better);
    best_idx = _mm256_blendv_pd(best_idx, _mm256_castsi256_pd(idx), better);
    idx = _mm256_add_epi64(idx, four);
  }

  alignas(32) double vals[4];
  alignas(32) std::int64_t cols[4];
  _mm256_store_pd(vals, best_val);
  _mm256_store_si256(reinterpret_cast<__m256i*>(cols), _mm256_castpd_si256(best_idx));
  RelaxResult best{inf, 0};
  for (int lane = 0; lane < 4; ++lane) {
    const auto c = static_cast<std::size_t>(cols[lane]);
    if (vals[lane] < best.delta || (vals[lane] == best.delta && c < best.column)) {
      best.delta = vals[lane];
      best.column = c;
    }
  }

  for (; j < n; ++j) {
    if (used_mask[j] != 0) continue;
    const double slack = cost_row[j] - row_potential - col_potential[j];
    if (slack < min_slack[j]) {
      min_slack[j] = slack;
      way[j] = current_col;
    }
    if (min_slack[j] < best.delta) {
      best.delta = min_slack[j];
      best.column = j;
    }
  }
  return best;
}

}  // namespace gbip::kernels::avx2
