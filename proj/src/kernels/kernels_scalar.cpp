#include <limits>

#include "gbip/kernels.hpp"

namespace gbip::kernels::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void neighbors_within(std::span<const double* const> coords, std::size_t begin,
                      std::size_t end, std::span<const double> query, double radius_sq,
                      std::vector<std::uint32_t>& out) {
  const std::size_t dim = coords.size();
  for (std::size_t j = begin; j < end; ++j) {
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
  RelaxResult best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t j = 0; j < cost_row.size(); ++j) {
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

}  // namespace gbip::kernels::scalar
