#include "gbip/inversion.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gbip/errors.hpp"
#include "gbip/kernels.hpp"
#include "gbip/rng.hpp"

namespace gbip {

static_assert(std::endian::native == std::endian::little,
              "chain files are written in native byte order");

std::string to_string(NoiseKind kind) {
  return kind == NoiseKind::gaussian ? "gaussian" : "laplace";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "laplace") return NoiseKind::laplace;
  throw ValidationError("unknown noise model '" + name + "' (expected gaussian or laplace)");
}

void NoiseModel::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ValidationError("noise scale must be a positive finite number");
  }
}

double NoiseModel::potential(const Eigen::VectorXd& residual) const {
  if (kind == NoiseKind::gaussian) return residual.squaredNorm() / (2.0 * scale * scale);
  return residual.lpNorm<1>() / scale;
}

double NoiseModel::normalizing_constant(std::size_t p) const {
  const double pp = static_cast<double>(p);
  if (kind == NoiseKind::gaussian) return 0.5 * pp * std::log(2.0 * std::numbers::pi * scale * scale);
  return pp * std::log(2.0 * scale);
}

double NoiseModel::negative_log_density(const Eigen::VectorXd& residual) const {
  return potential(residual) + normalizing_constant(static_cast<std::size_t>(residual.size()));
}

Eigen::VectorXd NoiseModel::sample(std::size_t p, std::uint64_t seed) const {
  validate();
  Rng rng(seed);
  Eigen::VectorXd eta(static_cast<Eigen::Index>(p));
  for (auto& e : eta) {
    if (kind == NoiseKind::gaussian) {
      e = scale * rng.normal();
    } else {
      // Inverse CDF; 1 - uniform() lies in (0, 1].
      const double v = rng.uniform() - 0.5;
      e = -scale * std::copysign(1.0, v) * std::log(1.0 - 2.0 * std::fabs(v));
    }
  }
  return eta;
}

ObservationSetup observation_setup(const PointCloud& cloud, std::size_t p, double delta,
                                   NoiseModel noise, bool normalize) {
  if (p > cloud.size()) {
    std::ostringstream msg;
    msg << "observation: p=" << p << " centers requested from a cloud of " << cloud.size();
    throw ValidationError(msg.str());
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ValidationError("observation: delta must be > 0");
  noise.validate();
  ObservationSetup s;
  s.manifold = cloud.manifold();
  s.delta = delta;
  s.noise = noise;
  s.normalize = normalize;
  for (std::size_t j = 0; j < p; ++j) {
    s.centers.push_back(cloud.chart(j));
    const auto x = cloud.point(j);
    s.center_coords.insert(s.center_coords.end(), x.begin(), x.end());
  }
  return s;
}

// ---- heat ----

Eigen::VectorXd heat_multipliers(std::span<const double> eigenvalues, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("heat: time must be >= 0");
  Eigen::VectorXd m(static_cast<Eigen::Index>(eigenvalues.size()));
  for (std::size_t i = 0; i < eigenvalues.size(); ++i)
    m(static_cast<Eigen::Index>(i)) = std::exp(-eigenvalues[i] * t);
  return m;
}

Eigen::VectorXd forward_heat(const Eigen::VectorXd& coefficients,
                             std::span<const double> eigenvalues, double t) {
  if (static_cast<std::size_t>(coefficients.size()) > eigenvalues.size()) {
    throw ValidationError("heat: more coefficients than eigenvalues");
  }
  return coefficients.cwiseProduct(
      heat_multipliers(eigenvalues.first(static_cast<std::size_t>(coefficients.size())), t));
}

Eigen::VectorXd forward_heat(const GraphSpectrum& spectrum, const Eigen::VectorXd& values,
                             double t) {
  const Eigen::VectorXd c = analyze(spectrum, values);
  return spectrum.vectors *
         forward_heat(c, {spectrum.eigenvalues.data(), spectrum.size()}, t);
}

// ---- observations ----

namespace {

std::vector<std::uint32_t> ball_members(const PointCloud& cloud, std::span<const double> center,
                                        double delta) {
  std::vector<const double*> cols;
  for (const auto& c : cloud.columns()) cols.push_back(c.data());
  std::vector<std::uint32_t> out;
  kernels::neighbors_within(cols, 0, cloud.size(), center, delta * delta, out);
  return out;
}

struct Node {
  ChartPoint c;
  double w;
};

// Gauss-Legendre nodes on [lo, hi] split into `panels` equal panels.
template <class F>
void gauss_panels(double lo, double hi, std::size_t panels, F&& emit) {
  using Rule = boost::math::quadrature::gauss<double, 20>;
  const auto& x = Rule::abscissa();
  const auto& w = Rule::weights();
  const double h = (hi - lo) / static_cast<double>(panels);
  for (std::size_t q = 0; q < panels; ++q) {
    const double mid = lo + h * (static_cast<double>(q) + 0.5);
    for (std::size_t i = 0; i < x.size(); ++i) {
      emit(mid + 0.5 * h * x[i], 0.5 * h * w[i]);
      emit(mid - 0.5 * h * x[i], 0.5 * h * w[i]);
    }
  }
}

// Quadrature nodes for integrals against gamma over B_delta(center) on the manifold.
std::vector<Node> ball_nodes(const Manifold& manifold, ChartPoint center, double delta,
                             std::size_t panels) {
  constexpr double kPi = std::numbers::pi;
  std::vector<Node> nodes;
  if (manifold.kind() == ManifoldKind::circle) {
    if (delta >= 2.0) {
      // Whole circle: the periodic trapezoid rule is exact for trigonometric
      // polynomials below its node count.
      const std::size_t m = 40 * panels;
      for (std::size_t i = 0; i < m; ++i)
        nodes.push_back({{2.0 * kPi * static_cast<double>(i) / static_cast<double>(m), 0.0},
                         1.0 / static_cast<double>(m)});
      return nodes;
    }
    // Chord 2 sin(|dtheta| / 2) <= delta.
    const double a = 2.0 * std::asin(0.5 * delta);
    gauss_panels(center.a - a, center.a + a, panels, [&](double t, double w) {
      nodes.push_back({{t, 0.0}, w / (2.0 * kPi)});
    });
    return nodes;
  }
  // Torus: |x - y|^2 = r^2 [(2 - 2 cos da) + (2 - 2 cos db)] <= delta^2.
  const double r = Manifold::kTorusRadius;
  const double budget = delta * delta / (r * r);
  auto half_width = [](double rem) {
    if (rem <= 0.0) return 0.0;
    return rem >= 4.0 ? kPi : std::acos(1.0 - 0.5 * rem);
  };
  const double outer = half_width(budget);
  const double norm = 1.0 / (4.0 * kPi * kPi);
  if (outer >= kPi) {
    // Every da is admissible; integrate da over the full period.
    gauss_panels(-kPi, kPi, panels, [&](double da, double wa) {
      const double inner = half_width(budget - (2.0 - 2.0 * std::cos(da)));
      gauss_panels(-inner, inner, panels, [&](double db, double wb) {
        nodes.push_back({{center.a + da, center.b + db}, wa * wb * norm});
      });
    });
    return nodes;
  }
  // da = outer sin(phi) removes the square-root behaviour of the inner width
  // at the ends of the outer range.
  gauss_panels(-0.5 * kPi, 0.5 * kPi, panels, [&](double phi, double wphi) {
    const double da = outer * std::sin(phi);
    const double wa = wphi * outer * std::cos(phi);
    const double inner = half_width(budget - (2.0 - 2.0 * std::cos(da)));
    gauss_panels(-inner, inner, panels, [&](double db, double wb) {
      nodes.push_back({{center.a + da, center.b + db}, wa * wb * norm});
    });
  });
  return nodes;
}

}  // namespace

double ball_measure(const Manifold& manifold, double delta) {
  if (!(delta > 0.0)) throw ValidationError("ball measure: delta must be > 0");
  if (manifold.kind() == ManifoldKind::circle) {
    return delta >= 2.0 ? 1.0 : 2.0 * std::asin(0.5 * delta) / std::numbers::pi;
  }
  double total = 0.0;
  for (const auto& node : ball_nodes(manifold, {0.0, 0.0}, delta, 32)) total += node.w;
  return total;
}

CloudObservation observe_cloud(const PointCloud& cloud, const Eigen::VectorXd& values,
                               const ObservationSetup& setup) {
  if (values.size() != static_cast<Eigen::Index>(cloud.size())) {
    throw ValidationError("observe: one value per cloud point required");
  }
  const std::size_t d = cloud.ambient_dim();
  CloudObservation out;
  out.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(setup.p()));
  for (std::size_t j = 0; j < setup.p(); ++j) {
    const auto members = ball_members(cloud, {setup.center_coords.data() + j * d, d}, setup.delta);
    out.counts.push_back(members.size());
    if (members.empty()) {
      std::ostringstream msg;
      msg << "ball " << j << " contains no cloud points; observation set to 0";
      out.warnings.push_back(msg.str());
      continue;
    }
    double sum = 0.0;
    for (const auto k : members) sum += values(k);
    const double denom = setup.normalize ? static_cast<double>(members.size())
                                         : static_cast<double>(cloud.size());
    out.values(static_cast<Eigen::Index>(j)) = sum / denom;
  }
  return out;
}

Eigen::MatrixXd observe_cloud_basis(const PointCloud& cloud, const Eigen::MatrixXd& basis,
                                    const ObservationSetup& setup) {
  if (basis.rows() != static_cast<Eigen::Index>(cloud.size())) {
    throw ValidationError("observe: basis rows must match the cloud size");
  }
  const std::size_t d = cloud.ambient_dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(setup.p()), basis.cols());
  for (std::size_t j = 0; j < setup.p(); ++j) {
    const auto members = ball_members(cloud, {setup.center_coords.data() + j * d, d}, setup.delta);
    if (members.empty()) continue;
    const auto row = static_cast<Eigen::Index>(j);
    for (const auto k : members) out.row(row) += basis.row(k);
    out.row(row) /= setup.normalize ? static_cast<double>(members.size())
                                    : static_cast<double>(cloud.size());
  }
  return out;
}

Eigen::VectorXd observe_continuum(const std::function<double(ChartPoint)>& v,
                                  const ObservationSetup& setup, std::size_t panels) {
  if (panels < 1) throw ValidationError("observe: need at least one panel");
  const double scale = setup.normalize ? 1.0 / ball_measure(setup.manifold, setup.delta) : 1.0;
  Eigen::VectorXd out(static_cast<Eigen::Index>(setup.p()));
  for (std::size_t j = 0; j < setup.p(); ++j) {
    double sum = 0.0;
    for (const auto& node : ball_nodes(setup.manifold, setup.centers[j], setup.delta, panels))
      sum += node.w * v(node.c);
    out(static_cast<Eigen::Index>(j)) = scale * sum;
  }
  return out;
}

Eigen::MatrixXd observe_continuum_modes(const ContinuumSpectrum& spectrum, std::size_t k,
                                        const ObservationSetup& setup, std::size_t panels) {
  if (k > spectrum.size()) throw ValidationError("observe: k exceeds the continuum modes");
  if (panels < 1) throw ValidationError("observe: need at least one panel");
  const double scale = setup.normalize ? 1.0 / ball_measure(setup.manifold, setup.delta) : 1.0;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(setup.p()), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < setup.p(); ++j) {
    const auto nodes = ball_nodes(setup.manifold, setup.centers[j], setup.delta, panels);
    std::vector<ChartPoint> pts;
    Eigen::VectorXd w(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      pts.push_back(nodes[q].c);
      w(static_cast<Eigen::Index>(q)) = nodes[q].w;
    }
    const auto vals = spectrum.evaluate(pts, k);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        m(vals.data(), static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(k));
    out.row(static_cast<Eigen::Index>(j)) = scale * (w.transpose() * m);
  }
  return out;
}

Eigen::MatrixXd graph_forward_operator(const PointCloud& cloud, const GraphSpectrum& spectrum,
                                       const ObservationSetup& setup, double t) {
  const Eigen::VectorXd decay =
      heat_multipliers({spectrum.eigenvalues.data(), spectrum.size()}, t);
  return observe_cloud_basis(cloud, spectrum.vectors, setup) * decay.asDiagonal();
}

Eigen::MatrixXd continuum_forward_operator(const ContinuumSpectrum& spectrum, std::size_t k,
                                           const ObservationSetup& setup, double t) {
  const Eigen::VectorXd decay =
      heat_multipliers(std::span<const double>(spectrum.eigenvalues()).first(k), t);
  return observe_continuum_modes(spectrum, k, setup) * decay.asDiagonal();
}

double potential(const Eigen::VectorXd& coefficients, const Eigen::VectorXd& y,
                 const Eigen::MatrixXd& forward, const NoiseModel& noise) {
  if (forward.cols() != coefficients.size() || forward.rows() != y.size()) {
    throw ValidationError("potential: forward operator shape mismatch");
  }
  return noise.potential(y - forward * coefficients);
}

// ---- conjugate posterior ----

PosteriorGaussian conjugate_posterior(const DiagonalGaussianMeasure& prior,
                                      const Eigen::MatrixXd& forward, const Eigen::VectorXd& y,
                                      double noise_std) {
  const auto k = static_cast<Eigen::Index>(prior.truncation());
  if (forward.cols() != k || forward.rows() != y.size()) {
    throw ValidationError("posterior: forward operator must be p x k with p = len(y)");
  }
  if (!(noise_std > 0.0)) {
    throw ValidationError("posterior: noise standard deviation must be > 0 (noiseless inversion "
                          "is not supported)");
  }
  const Eigen::VectorXd& c_half = prior.stds();
  const double s2n = noise_std * noise_std;

  PosteriorGaussian post;
  post.basis_ref = prior.basis_ref();
  Eigen::VectorXd mean_white = Eigen::VectorXd::Zero(k);  // C^(-1/2) (mean - prior mean)
  Eigen::MatrixXd v(k, 0);
  Eigen::VectorXd gain(0), shrink(0);
  if (forward.rows() > 0) {
    const Eigen::MatrixXd b = forward * c_half.asDiagonal();  // p x k
    const Eigen::VectorXd r = y - forward * prior.means();
    // Thin SVD through the p x p Gram matrix B B^T = U S^2 U^T.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b * b.transpose());
    const Eigen::VectorXd s2 = es.eigenvalues().cwiseMax(0.0);
    const double cutoff = 1e-14 * std::max(1.0, s2.maxCoeff());
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < s2.size(); ++i)
      if (s2(i) > cutoff) keep.push_back(i);
    const auto rank = static_cast<Eigen::Index>(keep.size());
    v.resize(k, rank);
    gain.resize(rank);
    shrink.resize(rank);
    for (Eigen::Index q = 0; q < rank; ++q) {
      const Eigen::Index i = keep[static_cast<std::size_t>(q)];
      const double s = std::sqrt(s2(i));
      const Eigen::VectorXd u = es.eigenvectors().col(i);
      v.col(q) = b.transpose() * u / s;
      gain(q) = s / (s2(i) + s2n) * u.dot(r);
      shrink(q) = 1.0 - noise_std / std::sqrt(s2(i) + s2n);
    }
    mean_white = v * gain;
  }
  post.mean = prior.means() + c_half.cwiseProduct(mean_white);
  post.law = CoefficientLaw::diagonal_low_rank(post.mean, c_half, v, shrink);
  post.covariance = post.law.covariance();
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
  return post;
}

DataVector synthesize_data(const DiagonalGaussianMeasure& prior, const Eigen::MatrixXd& forward,
                           const NoiseModel& noise, std::uint64_t seed) {
  if (forward.cols() != static_cast<Eigen::Index>(prior.truncation())) {
    throw ValidationError("synthesize: forward operator width differs from the prior truncation");
  }
  DataVector d;
  d.provenance = "synthetic";
  d.noise_seed = stream_key(seed, Stage::noise);
  d.truth_basis = prior.basis_ref();
  d.truth_coefficients = sample_coefficients(prior, stream_key(seed, Stage::data));
  d.y = forward * d.truth_coefficients +
        noise.sample(static_cast<std::size_t>(forward.rows()), d.noise_seed);
  return d;
}

// ---- pCN ----

ChainWriter::ChainWriter(std::string path, std::size_t dim, std::string basis_ref)
    : path_(std::move(path)), dim_(dim), basis_ref_(std::move(basis_ref)),
      os_(path_, std::ios::binary) {
  if (!os_) throw ValidationError("cannot open chain file '" + path_ + "'");
}

ChainWriter::~ChainWriter() {
  try {
    close();
  } catch (...) {
  }
}

void ChainWriter::write(std::size_t step, bool accepted, const Eigen::VectorXd& u) {
  if (static_cast<std::size_t>(u.size()) != dim_) throw ValidationError("chain: dimension mismatch");
  const double head[2] = {static_cast<double>(step), accepted ? 1.0 : 0.0};
  os_.write(reinterpret_cast<const char*>(head), sizeof head);
  os_.write(reinterpret_cast<const char*>(u.data()),
            static_cast<std::streamsize>(dim_ * sizeof(double)));
  ++records_;
}

void ChainWriter::close() {
  if (!os_.is_open()) return;
  os_.close();
  nlohmann::json side = {
      {"format", "gbip-chain"},
      {"version", 1},
      {"byte_order", "little"},
      {"value_type", "float64"},
      {"record_length", 2 + dim_},
      {"fields", {"step", "accepted", "coefficients"}},
      {"dim", dim_},
      {"records", records_},
      {"basis_ref", basis_ref_},
  };
  std::ofstream js(path_ + ".json");
  js << side.dump(2) << '\n';
}

PcnResult pcn_sample(const DiagonalGaussianMeasure& prior,
                     const std::function<double(const Eigen::VectorXd&)>& phi,
                     const PcnOptions& options) {
  if (!(options.beta > 0.0 && options.beta <= 1.0)) {
    throw ValidationError("pCN: beta must lie in (0, 1]");
  }
  if (options.n_steps <= options.burn_in) throw ValidationError("pCN: n_steps must exceed burn_in");
  const std::size_t kept = options.n_steps - options.burn_in;
  const std::size_t batches = std::max<std::size_t>(2, std::min(options.batches, kept));
  const std::size_t batch_len = kept / batches;

  const auto k = static_cast<Eigen::Index>(prior.truncation());
  const Eigen::VectorXd& m = prior.means();
  const Eigen::VectorXd& sd = prior.stds();
  const double rho = std::sqrt(1.0 - options.beta * options.beta);
  Rng rng(stream_key(options.seed, Stage::pcn));

  Eigen::VectorXd u = m, proposal(k), z(k);
  double phi_u = phi(u);
  std::size_t accepted = 0;

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k), sum_sq = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd bsum = Eigen::VectorXd::Zero(k), bsum_sq = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd batch_mean(k, static_cast<Eigen::Index>(batches));
  Eigen::MatrixXd batch_sq(k, static_cast<Eigen::Index>(batches));
  std::size_t in_batch = 0, batch = 0;

  for (std::size_t step = 0; step < options.n_steps; ++step) {
    for (auto& x : z) x = rng.normal();
    proposal = m + rho * (u - m) + options.beta * sd.cwiseProduct(z);
    const double phi_p = phi(proposal);
    const double log_a = phi_u - phi_p;
    const bool accept = log_a >= 0.0 || rng.uniform() < std::exp(log_a);
    if (accept) {
      u.swap(proposal);
      phi_u = phi_p;
      if (step >= options.burn_in) ++accepted;
    }
    if (step < options.burn_in) continue;
    if (options.writer) options.writer->write(step, accept, u);
    sum += u;
    sum_sq += u.cwiseAbs2();
    if (batch < batches) {
      bsum += u;
      bsum_sq += u.cwiseAbs2();
      if (++in_batch == batch_len) {
        batch_mean.col(static_cast<Eigen::Index>(batch)) = bsum / static_cast<double>(batch_len);
        batch_sq.col(static_cast<Eigen::Index>(batch)) = bsum_sq / static_cast<double>(batch_len);
        bsum.setZero();
        bsum_sq.setZero();
        in_batch = 0;
        ++batch;
      }
    }
  }

  PcnResult out;
  out.kept = kept;
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(kept);
  const double nk = static_cast<double>(kept);
  out.mean = sum / nk;
  out.variance = (sum_sq / nk - out.mean.cwiseAbs2()).cwiseMax(0.0) * (nk / (nk - 1.0));
  // Batch means: spread of per-batch statistics around their average.
  const double nb = static_cast<double>(batches);
  const Eigen::MatrixXd batch_var = batch_sq - batch_mean.cwiseAbs2();
  auto spread = [&](const Eigen::MatrixXd& stat) {
    const Eigen::VectorXd avg = stat.rowwise().mean();
    const Eigen::VectorXd ss = (stat.colwise() - avg).cwiseAbs2().rowwise().sum();
    return Eigen::VectorXd((ss / (nb - 1.0) / nb).cwiseSqrt());
  };
  out.mean_stderr = spread(batch_mean);
  out.variance_stderr = spread(batch_var);
  return out;
}

}  // namespace gbip
