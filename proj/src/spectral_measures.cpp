#include "gbip/spectral_measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gbip/errors.hpp"
#include "gbip/graph.hpp"
#include "gbip/rng.hpp"

namespace gbip {

namespace {

void require_same_basis(const DiagonalGaussianMeasure& a, const DiagonalGaussianMeasure& b,
                        const char* what) {
  if (a.basis_ref() != b.basis_ref()) {
    std::ostringstream msg;
    msg << what << ": basis mismatch ('" << a.basis_ref() << "' vs '" << b.basis_ref() << "')";
    throw ValidationError(msg.str());
  }
  if (a.truncation() != b.truncation()) {
    std::ostringstream msg;
    msg << what << ": truncation mismatch (" << a.truncation() << " vs " << b.truncation() << ")";
    throw ValidationError(msg.str());
  }
}

void require_prior_params(double alpha, double s, int m) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("prior: alpha must be >= 0");
  if (!(s > m)) {
    std::ostringstream msg;
    msg << "prior: s must exceed the intrinsic dimension (s=" << s << ", m=" << m << ")";
    throw ValidationError(msg.str());
  }
}

}  // namespace

DiagonalGaussianMeasure::DiagonalGaussianMeasure(std::string basis_ref, Eigen::VectorXd means,
                                                 Eigen::VectorXd stds, double tail_bound)
    : basis_ref_(std::move(basis_ref)),
      means_(std::move(means)),
      stds_(std::move(stds)),
      tail_bound_(tail_bound) {
  if (means_.size() != stds_.size()) throw ValidationError("measure: means/stds length mismatch");
  for (Eigen::Index i = 0; i < stds_.size(); ++i) {
    if (!(stds_(i) >= 0.0) || !std::isfinite(stds_(i)) || !std::isfinite(means_(i))) {
      throw ValidationError("measure: stds must be finite and non-negative, means finite");
    }
  }
  if (!(tail_bound_ >= 0.0)) throw ValidationError("measure: tail bound must be non-negative");
}

DiagonalGaussianMeasure gaussian_prior(std::string basis_ref, std::span<const double> eigenvalues,
                                       double alpha, double s, int intrinsic_dim,
                                       double tail_bound) {
  require_prior_params(alpha, s, intrinsic_dim);
  const auto k = static_cast<Eigen::Index>(eigenvalues.size());
  Eigen::VectorXd stds(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double base = alpha + eigenvalues[static_cast<std::size_t>(i)];
    if (!(base > 0.0)) {
      std::ostringstream msg;
      msg << "prior: alpha + lambda_" << (i + 1) << " = " << base
          << " is not positive; use alpha > 0";
      throw DegenerateCovarianceError(msg.str());
    }
    stds(i) = std::pow(base, -s / 4.0);
  }
  return {std::move(basis_ref), Eigen::VectorXd::Zero(k), std::move(stds), tail_bound};
}

DiagonalGaussianMeasure continuum_prior(const Manifold& manifold, double alpha, double s,
                                        std::size_t k, double tail_target) {
  require_prior_params(alpha, s, manifold.intrinsic_dim());
  // lambda_1 = 0 on a closed manifold.
  if (alpha <= 0.0) throw DegenerateCovarianceError("prior: alpha + lambda_1 = 0; use alpha > 0");
  const double total = spectral_tail_bound(manifold, 0, alpha, s / 2.0);

  std::size_t chosen = k;
  if (chosen == 0) {
    // Walk cluster boundaries until the remaining variance is small enough.
    std::size_t probe = 256;
    for (;;) {
      const auto spec = continuum_spectrum(manifold, probe);
      double prefix = 0.0;
      for (const auto& [b, e] : spec.clusters(spec.complete_cluster_prefix(probe))) {
        for (std::size_t i = b; i < e; ++i) prefix += std::pow(alpha + spec.eigenvalue(i), -s / 2.0);
        if (total - prefix < tail_target) {
          chosen = e;
          break;
        }
      }
      if (chosen != 0) break;
      if (probe > (1u << 20)) throw ValidationError("prior: tail target unreachable");
      probe *= 4;
    }
  }
  const auto spec = continuum_spectrum(manifold, chosen);
  double prefix = 0.0;
  for (std::size_t i = 0; i < chosen; ++i) prefix += std::pow(alpha + spec.eigenvalue(i), -s / 2.0);
  return gaussian_prior("continuum:" + to_string(manifold.kind()), spec.eigenvalues(), alpha, s,
                        manifold.intrinsic_dim(), std::max(0.0, total - prefix));
}

DiagonalGaussianMeasure graph_prior(const GraphSpectrum& spectrum, double alpha, double s,
                                    int intrinsic_dim, std::string basis_ref) {
  return gaussian_prior(std::move(basis_ref),
                        {spectrum.eigenvalues.data(), spectrum.size()}, alpha, s, intrinsic_dim);
}

// ---- CoefficientLaw ----

CoefficientLaw CoefficientLaw::diagonal(Eigen::VectorXd mean, Eigen::VectorXd stds) {
  if (mean.size() != stds.size()) throw ValidationError("law: mean/stds length mismatch");
  CoefficientLaw law;
  law.mean_ = std::move(mean);
  law.stds_ = std::move(stds);
  return law;
}

CoefficientLaw CoefficientLaw::of(const DiagonalGaussianMeasure& measure) {
  return diagonal(measure.means(), measure.stds());
}

CoefficientLaw CoefficientLaw::diagonal_low_rank(Eigen::VectorXd mean, Eigen::VectorXd stds,
                                                 Eigen::MatrixXd v, Eigen::VectorXd shrink) {
  CoefficientLaw law = diagonal(std::move(mean), std::move(stds));
  if (v.rows() != law.mean_.size() || v.cols() != shrink.size()) {
    throw ValidationError("law: low-rank factor has the wrong shape");
  }
  law.v_ = std::move(v);
  law.shrink_ = std::move(shrink);
  return law;
}

CoefficientLaw CoefficientLaw::with_input_rotation(std::vector<RotationBlock> blocks) const {
  CoefficientLaw out = *this;
  out.rotation_.clear();
  const auto k = static_cast<std::size_t>(mean_.size());
  for (auto& b : blocks) {
    if (b.q.rows() != b.q.cols()) throw ValidationError("law: rotation blocks must be square");
    if (b.begin >= k) continue;
    if (b.begin + static_cast<std::size_t>(b.q.rows()) > k) {
      throw ValidationError("law: rotation block straddles the truncation");
    }
    out.rotation_.push_back(std::move(b));
  }
  return out;
}

void CoefficientLaw::rotate(Eigen::Ref<Eigen::MatrixXd> z) const {
  for (const auto& b : rotation_) {
    const auto begin = static_cast<Eigen::Index>(b.begin);
    const Eigen::MatrixXd block = z.middleRows(begin, b.q.rows());
    z.middleRows(begin, b.q.rows()) = b.q * block;
  }
}

Eigen::VectorXd CoefficientLaw::draw(const Eigen::VectorXd& xi) const {
  const auto k = mean_.size();
  if (xi.size() < k) throw ValidationError("law: not enough standard normals");
  Eigen::VectorXd z = xi.head(k);
  rotate(z);
  if (v_.cols() > 0) z -= v_ * shrink_.cwiseProduct(v_.transpose() * z);
  return mean_ + stds_.cwiseProduct(z);
}

Eigen::MatrixXd CoefficientLaw::draw_batch(const Eigen::MatrixXd& xi) const {
  const auto k = mean_.size();
  if (xi.rows() < k) throw ValidationError("law: not enough standard normals");
  Eigen::MatrixXd z = xi.topRows(k);
  rotate(z);
  if (v_.cols() > 0) z -= v_ * (shrink_.asDiagonal() * (v_.transpose() * z));
  z = stds_.asDiagonal() * z;
  z.colwise() += mean_;
  return z;
}

CoefficientLaw CoefficientLaw::scaled(const Eigen::VectorXd& multipliers) const {
  if (multipliers.size() != mean_.size()) throw ValidationError("law: multiplier length mismatch");
  CoefficientLaw out = *this;
  out.mean_ = mean_.cwiseProduct(multipliers);
  out.stds_ = stds_.cwiseProduct(multipliers);
  return out;
}

Eigen::VectorXd CoefficientLaw::marginal_variances() const {
  Eigen::VectorXd var = stds_.cwiseAbs2();
  if (v_.cols() > 0) {
    // (I - V D V^T)^2 = I - V (2D - D^2) V^T for orthonormal V.
    const Eigen::VectorXd c = 2.0 * shrink_ - shrink_.cwiseAbs2();
    const Eigen::VectorXd reduction = v_.cwiseAbs2() * c;
    var = var.cwiseProduct((Eigen::VectorXd::Ones(var.size()) - reduction).cwiseMax(0.0));
  }
  return var;
}

Eigen::MatrixXd CoefficientLaw::covariance() const {
  // S (I - V D V^T)^2 S = S (I - V (2D - D^2) V^T) S; the input rotation
  // cancels in Q Q^T.
  const auto k = mean_.size();
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(k, k);
  if (v_.cols() > 0) {
    const Eigen::VectorXd c = 2.0 * shrink_ - shrink_.cwiseAbs2();
    inner.noalias() -= v_ * c.asDiagonal() * v_.transpose();
  }
  return stds_.asDiagonal() * inner * stds_.asDiagonal();
}

// ---- sampling ----

Eigen::VectorXd standard_normals(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd xi(static_cast<Eigen::Index>(k));
  for (auto& x : xi) x = rng.normal();
  return xi;
}

Eigen::VectorXd sample_coefficients(const DiagonalGaussianMeasure& measure, std::uint64_t seed) {
  const Eigen::VectorXd xi = standard_normals(measure.truncation(), seed);
  return measure.means() + measure.stds().cwiseProduct(xi);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_coupled(const DiagonalGaussianMeasure& a,
                                                           const DiagonalGaussianMeasure& b,
                                                           std::uint64_t seed) {
  const Eigen::VectorXd xi = standard_normals(std::max(a.truncation(), b.truncation()), seed);
  const auto ka = static_cast<Eigen::Index>(a.truncation());
  const auto kb = static_cast<Eigen::Index>(b.truncation());
  return {a.means() + a.stds().cwiseProduct(xi.head(ka)),
          b.means() + b.stds().cwiseProduct(xi.head(kb))};
}

Eigen::VectorXd synthesize(const Eigen::MatrixXd& basis_values,
                           const Eigen::VectorXd& coefficients) {
  const Eigen::Index k = std::min(basis_values.cols(), coefficients.size());
  return basis_values.leftCols(k) * coefficients.head(k);
}

Eigen::VectorXd synthesize(const GraphSpectrum& spectrum, const Eigen::VectorXd& coefficients) {
  if (coefficients.size() > spectrum.vectors.cols()) {
    throw ValidationError("synthesize: more coefficients than graph modes");
  }
  return synthesize(spectrum.vectors, coefficients);
}

Eigen::VectorXd analyze(const GraphSpectrum& spectrum, const Eigen::VectorXd& values) {
  if (values.size() != spectrum.vectors.rows()) throw ValidationError("analyze: length mismatch");
  return spectrum.vectors.transpose() * values / static_cast<double>(values.size());
}

Eigen::VectorXd sample_measure(const DiagonalGaussianMeasure& measure,
                               const GraphSpectrum& spectrum, std::uint64_t seed) {
  if (measure.truncation() > spectrum.size()) {
    throw ValidationError("sample: measure truncation exceeds the computed graph modes");
  }
  return synthesize(spectrum, sample_coefficients(measure, seed));
}

Eigen::VectorXd sample_measure(const DiagonalGaussianMeasure& measure,
                               const ContinuumSpectrum& spectrum,
                               std::span<const ChartPoint> points, std::uint64_t seed) {
  const std::size_t k = measure.truncation();
  if (k > spectrum.size()) throw ValidationError("sample: truncation exceeds continuum modes");
  const auto values = spectrum.evaluate(points, k);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      basis(values.data(), static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(k));
  return basis * sample_coefficients(measure, seed);
}

// ---- divergences ----

double kl_divergence(const DiagonalGaussianMeasure& nu, const DiagonalGaussianMeasure& pi) {
  require_same_basis(nu, pi, "kl_divergence");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < nu.means().size(); ++i) {
    const double sn = nu.stds()(i), sp = pi.stds()(i);
    const double dm = nu.means()(i) - pi.means()(i);
    if (sp == 0.0) {
      // pi is a point mass in this mode; nu must be the same point mass.
      if (sn == 0.0 && dm == 0.0) continue;
      return kInf;
    }
    if (sn == 0.0) return kInf;  // nu singular with respect to pi
    const double r = sn / sp;
    kl += 0.5 * (r * r - 1.0 - 2.0 * std::log(r) + dm * dm / (sp * sp));
  }
  return kl;
}

double kl_divergence(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                     const DiagonalGaussianMeasure& pi) {
  const auto k = static_cast<Eigen::Index>(pi.truncation());
  if (mean.size() != k || cov.rows() != k || cov.cols() != k) {
    throw ValidationError("kl_divergence: dimensions do not match the reference measure");
  }
  const Eigen::VectorXd& sp = pi.stds();
  if ((sp.array() <= 0.0).any()) {
    throw DegenerateCovarianceError("kl_divergence: reference measure has a zero-variance mode");
  }
  const Eigen::VectorXd inv = sp.cwiseInverse();
  Eigen::MatrixXd a = inv.asDiagonal() * cov * inv.asDiagonal();
  a = 0.5 * (a + a.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Eigen::VectorXd z = (mean - pi.means()).cwiseProduct(inv);
  return 0.5 * (a.trace() - static_cast<double>(k) - logdet + z.squaredNorm());
}

double wasserstein2_gaussian(const DiagonalGaussianMeasure& a, const DiagonalGaussianMeasure& b) {
  require_same_basis(a, b, "wasserstein2_gaussian");
  const double w2 = (a.means() - b.means()).squaredNorm() + (a.stds() - b.stds()).squaredNorm();
  return std::sqrt(w2);
}

// ---- potentials and J ----

double LinearGaussianPotential::operator()(const Eigen::VectorXd& coefficients) const {
  const Eigen::Index k = std::min(forward.cols(), coefficients.size());
  const Eigen::VectorXd r = data - forward.leftCols(k) * coefficients.head(k);
  return r.squaredNorm() / (2.0 * noise_std * noise_std);
}

double LinearGaussianPotential::expectation(const Eigen::VectorXd& mean,
                                            const Eigen::MatrixXd& cov) const {
  const Eigen::VectorXd r = data - forward * mean;
  const double trace = (forward * cov * forward.transpose()).trace();
  return (r.squaredNorm() + trace) / (2.0 * noise_std * noise_std);
}

double LinearGaussianPotential::expectation_diagonal(const Eigen::VectorXd& mean,
                                                     const Eigen::VectorXd& variances) const {
  const Eigen::VectorXd r = data - forward * mean;
  const double trace = (forward.cwiseAbs2() * variances).sum();
  return (r.squaredNorm() + trace) / (2.0 * noise_std * noise_std);
}

JValue j_functional(const DiagonalGaussianMeasure& nu, const DiagonalGaussianMeasure& pi,
                    const LinearGaussianPotential& potential) {
  if (potential.forward.cols() != static_cast<Eigen::Index>(nu.truncation())) {
    throw ValidationError("j_functional: forward map width differs from the truncation");
  }
  JValue out;
  out.kl = kl_divergence(nu, pi);
  out.expected_potential = potential.expectation_diagonal(nu.means(), nu.stds().cwiseAbs2());
  out.value = out.kl + out.expected_potential;
  out.exact = true;
  return out;
}

JValue j_functional(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                    const DiagonalGaussianMeasure& pi, const LinearGaussianPotential& potential) {
  JValue out;
  out.kl = kl_divergence(mean, cov, pi);
  out.expected_potential = potential.expectation(mean, cov);
  out.value = out.kl + out.expected_potential;
  out.exact = true;
  return out;
}

JValue j_functional(const DiagonalGaussianMeasure& nu, const DiagonalGaussianMeasure& pi,
                    const std::function<double(const Eigen::VectorXd&)>& potential,
                    std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 2) throw ValidationError("j_functional: need at least two Monte-Carlo draws");
  JValue out;
  out.kl = kl_divergence(nu, pi);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t r = 0; r < n_mc; ++r) {
    const double phi = potential(sample_coefficients(nu, stream_key(seed, Stage::posterior, r)));
    sum += phi;
    sum_sq += phi * phi;
  }
  const double n = static_cast<double>(n_mc);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  out.expected_potential = mean;
  out.stderr_ = std::sqrt(var / n);
  out.value = out.kl + mean;
  out.exact = false;
  return out;
}

}  // namespace gbip
