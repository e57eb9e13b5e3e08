#include "gbip/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "gbip/errors.hpp"
#include "gbip/rng.hpp"

namespace gbip {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

// |a - b| on the circle of angles, in [0, pi].
double angle_gap(double a, double b) {
  const double d = std::fabs(wrap_angle(a - b));
  return std::min(d, kTwoPi - d);
}

}  // namespace

std::string to_string(ManifoldKind kind) {
  return kind == ManifoldKind::circle ? "circle" : "flat_torus";
}

ManifoldKind manifold_kind_from_string(const std::string& name) {
  if (name == "circle") return ManifoldKind::circle;
  if (name == "flat_torus" || name == "torus") return ManifoldKind::flat_torus;
  throw ValidationError("unknown manifold '" + name + "' (expected circle or flat_torus)");
}

double Manifold::volume() const {
  if (kind_ == ManifoldKind::circle) return kTwoPi;
  const double side = kTwoPi * kTorusRadius;
  return side * side;
}

double Manifold::length_scale() const {
  return std::pow(volume(), 1.0 / static_cast<double>(intrinsic_dim()));
}

double Manifold::diameter() const {
  if (kind_ == ManifoldKind::circle) return std::numbers::pi;
  return kTorusRadius * std::numbers::pi * kSqrt2;
}

void Manifold::embed(ChartPoint c, std::span<double> out) const {
  if (kind_ == ManifoldKind::circle) {
    out[0] = std::cos(c.a);
    out[1] = std::sin(c.a);
    return;
  }
  out[0] = kTorusRadius * std::cos(c.a);
  out[1] = kTorusRadius * std::sin(c.a);
  out[2] = kTorusRadius * std::cos(c.b);
  out[3] = kTorusRadius * std::sin(c.b);
}

std::vector<double> Manifold::embed(ChartPoint c) const {
  std::vector<double> out(ambient_dim());
  embed(c, out);
  return out;
}

ChartPoint Manifold::chart(std::span<const double> x) const {
  if (kind_ == ManifoldKind::circle) return {wrap_angle(std::atan2(x[1], x[0])), 0.0};
  return {wrap_angle(std::atan2(x[1], x[0])), wrap_angle(std::atan2(x[3], x[2]))};
}

bool Manifold::contains(std::span<const double> x, double tol) const {
  if (x.size() != ambient_dim()) return false;
  if (kind_ == ManifoldKind::circle) return std::fabs(std::hypot(x[0], x[1]) - 1.0) <= tol;
  return std::fabs(std::hypot(x[0], x[1]) - kTorusRadius) <= tol &&
         std::fabs(std::hypot(x[2], x[3]) - kTorusRadius) <= tol;
}

double Manifold::geodesic(std::span<const double> x, std::span<const double> y) const {
  if (!contains(x) || !contains(y)) {
    throw DomainError("geodesic: point not on the " + to_string(kind_));
  }
  return geodesic(chart(x), chart(y));
}

double Manifold::geodesic(ChartPoint x, ChartPoint y) const {
  if (kind_ == ManifoldKind::circle) return angle_gap(x.a, y.a);
  return kTorusRadius * std::hypot(angle_gap(x.a, y.a), angle_gap(x.b, y.b));
}

QuadratureGrid Manifold::quadrature_grid(std::size_t resolution) const {
  if (resolution < 2) throw ValidationError("quadrature resolution must be >= 2");
  QuadratureGrid grid;
  grid.ambient_dim = ambient_dim();
  const double h = kTwoPi / static_cast<double>(resolution);
  if (kind_ == ManifoldKind::circle) {
    grid.charts.reserve(resolution);
    for (std::size_t i = 0; i < resolution; ++i) grid.charts.push_back({h * i, 0.0});
  } else {
    grid.charts.reserve(resolution * resolution);
    for (std::size_t i = 0; i < resolution; ++i)
      for (std::size_t j = 0; j < resolution; ++j) grid.charts.push_back({h * i, h * j});
  }
  const std::size_t count = grid.charts.size();
  grid.weights.assign(count, 1.0 / static_cast<double>(count));
  grid.coords.resize(count * grid.ambient_dim);
  for (std::size_t i = 0; i < count; ++i) {
    embed(grid.charts[i], {grid.coords.data() + i * grid.ambient_dim, grid.ambient_dim});
  }
  return grid;
}

double Manifold::quadrature(const std::function<double(ChartPoint)>& f,
                            std::size_t resolution) const {
  if (resolution < 2) throw ValidationError("quadrature resolution must be >= 2");
  const double h = kTwoPi / static_cast<double>(resolution);
  double acc = 0.0;
  if (kind_ == ManifoldKind::circle) {
    for (std::size_t i = 0; i < resolution; ++i) acc += f({h * i, 0.0});
    return acc / static_cast<double>(resolution);
  }
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t j = 0; j < resolution; ++j) acc += f({h * i, h * j});
  return acc / static_cast<double>(resolution * resolution);
}

PointCloud::PointCloud(Manifold manifold, std::uint64_t seed, std::vector<double> coords)
    : manifold_(manifold), seed_(seed), coords_(std::move(coords)) {
  const std::size_t d = manifold_.ambient_dim();
  if (coords_.size() % d != 0) throw ValidationError("point cloud coordinate count mismatch");
  n_ = coords_.size() / d;
  charts_.reserve(n_);
  columns_.assign(d, std::vector<double>(n_));
  for (std::size_t i = 0; i < n_; ++i) {
    const auto x = point(i);
    if (!manifold_.contains(x)) {
      throw DomainError("point " + std::to_string(i) + " is not on the " +
                        to_string(manifold_.kind()));
    }
    charts_.push_back(manifold_.chart(x));
    for (std::size_t k = 0; k < d; ++k) columns_[k][i] = x[k];
  }
}

PointCloud sample(const Manifold& manifold, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample: n must be >= 1");
  Rng rng(stream_key(seed, Stage::cloud));
  const std::size_t d = manifold.ambient_dim();
  std::vector<double> coords(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    ChartPoint c;
    c.a = kTwoPi * rng.uniform();
    if (manifold.intrinsic_dim() == 2) c.b = kTwoPi * rng.uniform();
    manifold.embed(c, {coords.data() + i * d, d});
  }
  return PointCloud(manifold, seed, std::move(coords));
}

double TrigFactor::value(double t) const {
  if (freq == 0) return 1.0;
  return is_sin ? kSqrt2 * std::sin(freq * t) : kSqrt2 * std::cos(freq * t);
}

double TrigFactor::second_derivative(double t) const {
  return -static_cast<double>(freq * freq) * value(t);
}

ContinuumSpectrum::ContinuumSpectrum(Manifold manifold, std::vector<double> eigenvalues,
                                     std::vector<ModeLabel> labels)
    : manifold_(manifold), eigenvalues_(std::move(eigenvalues)), labels_(std::move(labels)) {}

double ContinuumSpectrum::value(std::size_t i, ChartPoint c) const {
  const ModeLabel& l = labels_[i];
  if (manifold_.kind() == ManifoldKind::circle) return l.first.value(c.a);
  return l.first.value(c.a) * l.second.value(c.b);
}

double ContinuumSpectrum::value(std::size_t i, std::span<const double> x) const {
  return value(i, manifold_.chart(x));
}

double ContinuumSpectrum::laplacian(std::size_t i, ChartPoint c) const {
  const ModeLabel& l = labels_[i];
  if (manifold_.kind() == ManifoldKind::circle) return l.first.second_derivative(c.a);
  const double r2 = Manifold::kTorusRadius * Manifold::kTorusRadius;
  return (l.first.second_derivative(c.a) * l.second.value(c.b) +
          l.first.value(c.a) * l.second.second_derivative(c.b)) /
         r2;
}

std::vector<double> ContinuumSpectrum::evaluate(std::span<const ChartPoint> points,
                                                std::size_t k) const {
  k = std::min(k, size());
  std::vector<double> out(points.size() * k);
  // Factor tables per point: cos/sin of each frequency via std::cos / std::sin.
  int max_freq = 0;
  for (std::size_t i = 0; i < k; ++i)
    max_freq = std::max({max_freq, labels_[i].first.freq, labels_[i].second.freq});
  std::vector<double> ca(max_freq + 1), sa(max_freq + 1), cb(max_freq + 1), sb(max_freq + 1);
  const bool torus = manifold_.kind() == ManifoldKind::flat_torus;
  auto factor = [](const TrigFactor& f, const std::vector<double>& c,
                   const std::vector<double>& s) {
    if (f.freq == 0) return 1.0;
    return kSqrt2 * (f.is_sin ? s[f.freq] : c[f.freq]);
  };
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (int j = 0; j <= max_freq; ++j) {
      ca[j] = std::cos(j * points[p].a);
      sa[j] = std::sin(j * points[p].a);
      if (torus) {
        cb[j] = std::cos(j * points[p].b);
        sb[j] = std::sin(j * points[p].b);
      }
    }
    double* row = out.data() + p * k;
    for (std::size_t i = 0; i < k; ++i) {
      const ModeLabel& l = labels_[i];
      double v = factor(l.first, ca, sa);
      if (torus) v *= factor(l.second, cb, sb);
      row[i] = v;
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> ContinuumSpectrum::clusters(
    std::size_t k, double rel_gap) const {
  k = std::min(k, size());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= k; ++i) {
    const bool split =
        i == k || std::fabs(eigenvalues_[i] - eigenvalues_[begin]) >
                      rel_gap * std::max(1.0, std::fabs(eigenvalues_[begin]));
    if (split) {
      out.emplace_back(begin, i);
      begin = i;
    }
  }
  return out;
}

std::size_t ContinuumSpectrum::complete_cluster_prefix(std::size_t k) const {
  k = std::min(k, size());
  if (k == size()) {
    // Cannot see beyond the computed modes; treat the last cluster as whole
    // only if it is separated from a recomputed extension.
    const auto extended = continuum_spectrum(manifold_, k + 16);
    return extended.complete_cluster_prefix(k);
  }
  std::size_t prefix = 0;
  for (const auto& [b, e] : clusters(k + 1)) {
    if (e <= k) prefix = e;
  }
  return prefix;
}

namespace {

struct TorusMode {
  int j, l;
  ModeLabel label;
  double lambda;
};

std::vector<TorusMode> torus_modes(std::size_t k) {
  constexpr double inv_r2 = 2.0;  // 1 / kTorusRadius^2, exact
  int bound = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k)))) + 2;
  for (;;) {
    std::vector<TorusMode> modes;
    for (int j = 0; j <= bound; ++j) {
      for (int l = 0; l <= bound; ++l) {
        const double lambda = inv_r2 * (j * j + l * l);
        std::vector<TrigFactor> fa = j == 0 ? std::vector<TrigFactor>{{0, false}}
                                            : std::vector<TrigFactor>{{j, false}, {j, true}};
        std::vector<TrigFactor> fb = l == 0 ? std::vector<TrigFactor>{{0, false}}
                                            : std::vector<TrigFactor>{{l, false}, {l, true}};
        for (const auto& a : fa)
          for (const auto& b : fb) modes.push_back({j, l, ModeLabel{a, b}, lambda});
      }
    }
    std::stable_sort(modes.begin(), modes.end(), [](const TorusMode& x, const TorusMode& y) {
      return std::tie(x.lambda, x.j, x.l, x.label.first.is_sin, x.label.second.is_sin) <
             std::tie(y.lambda, y.j, y.l, y.label.first.is_sin, y.label.second.is_sin);
    });
    if (modes.size() >= k) {
      const TorusMode& last = modes[k - 1];
      // Every lattice point with norm below the k-th must be inside the square.
      if (last.j * last.j + last.l * last.l <= bound * bound) {
        modes.resize(k);
        return modes;
      }
    }
    bound *= 2;
  }
}

}  // namespace

ContinuumSpectrum continuum_spectrum(const Manifold& manifold, std::size_t k) {
  if (k < 1) throw ValidationError("continuum_spectrum: k must be >= 1");
  std::vector<double> eig;
  std::vector<ModeLabel> labels;
  eig.reserve(k);
  labels.reserve(k);
  if (manifold.kind() == ManifoldKind::circle) {
    eig.push_back(0.0);
    labels.push_back({{0, false}, {0, false}});
    for (int j = 1; eig.size() < k; ++j) {
      for (bool s : {false, true}) {
        if (eig.size() == k) break;
        eig.push_back(static_cast<double>(j * j));
        labels.push_back({{j, s}, {0, false}});
      }
    }
  } else {
    for (const auto& m : torus_modes(k)) {
      eig.push_back(m.lambda);
      labels.push_back(m.label);
    }
  }
  return ContinuumSpectrum(manifold, std::move(eig), std::move(labels));
}

double spectral_tail_bound(const Manifold& manifold, std::size_t k, double alpha,
                           double exponent) {
  const int m = manifold.intrinsic_dim();
  if (exponent <= 0.5 * m) {
    throw ValidationError("spectral_tail_bound: exponent must exceed m/2 for a finite tail");
  }
  constexpr std::size_t kExplicit = 20000;
  // Cutoff independent of k, so tails for different k share one remainder.
  const std::size_t count = k < kExplicit ? 2 * kExplicit : k + kExplicit;
  const auto spec = continuum_spectrum(manifold, count);
  const std::size_t stop = spec.complete_cluster_prefix(count);
  double sum = 0.0;
  // Smallest terms first keeps the rounding below the remainder's slack.
  for (std::size_t i = stop; i-- > k;) sum += std::pow(alpha + spec.eigenvalue(i), -exponent);
  const double lambda_last = spec.eigenvalue(stop - 1);
  if (manifold.kind() == ManifoldKind::circle) {
    // Remaining modes are pairs at j^2, j > J: 2 * int_J^inf x^(-2e) dx.
    const double J = std::sqrt(lambda_last);
    sum += 2.0 * std::pow(J, 1.0 - 2.0 * exponent) / (2.0 * exponent - 1.0);
  } else {
    // Remaining lattice points nu with |nu| > rho0, lambda = 2 |nu|^2; compare
    // with the integral over unit squares centred on the points.
    if (exponent <= 1.0) {
      throw ValidationError("spectral_tail_bound: torus tail needs exponent > 1");
    }
    const double h = 0.5 * kSqrt2;
    const double rho0 = std::sqrt(0.5 * lambda_last);
    const double u0 = std::max(rho0 - 2.0 * h, 1.0);
    sum += 2.0 * std::numbers::pi * std::pow(2.0, -exponent) *
           (std::pow(u0, 2.0 - 2.0 * exponent) / (2.0 * exponent - 2.0) +
            h * std::pow(u0, 1.0 - 2.0 * exponent) / (2.0 * exponent - 1.0));
  }
  return sum;
}

}  // namespace gbip
