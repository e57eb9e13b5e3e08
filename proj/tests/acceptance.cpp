// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria (0 when all pass).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "gbip/graph.hpp"
#include "gbip/harness.hpp"
#include "gbip/inversion.hpp"
#include "gbip/rng.hpp"
#include "gbip/spectral_measures.hpp"
#include "gbip/transport.hpp"

using namespace gbip;

namespace {

// Tolerances.
constexpr double kEigRelErrorMax = 0.10;        // 1: at the largest n
constexpr std::size_t kEigInversionsAllowed = 1;  // 1: per mode, on the seed medians
constexpr double kSweepSeconds = 300.0;         // 1
constexpr double kPriorRatio = 1.0 / 3.0;       // 3
constexpr double kForwardRatio = 1.0 / 3.0;     // 4
constexpr double kObservationRatio = 0.5;       // 5
constexpr double kPosteriorRatio = 0.5;         // 6
constexpr double kPcnMeanSe = 3.0;              // 7
constexpr double kPcnVarRel = 0.10;             // 7
constexpr double kPcnSeconds = 120.0;           // 7
constexpr double kJSlack = 1e-10;               // 8
constexpr double kTriangleSlack = 1e-9;         // 9
constexpr double kPushforwardStdRel = 0.05;     // 10
constexpr double kInvariantTol = 1e-10;         // 10

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> column(const ConvergenceReport& r, double ReportRow::*field) {
  std::vector<double> v;
  for (const auto& row : r.rows) v.push_back(row.*field);
  return v;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return !v.empty();
}

std::string series(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.4g", x);
  return "[" + s + "]";
}

void decreasing_with_ratio(int id, const std::string& name, const std::vector<double>& v,
                           double ratio, std::string& detail, bool& ok) {
  const bool dec = strictly_decreasing(v);
  const bool drop = v.size() >= 2 && v.back() < ratio * v.front();
  ok = ok && dec && drop;
  detail += name + " " + series(v) + (dec ? " decreasing" : " NOT decreasing") +
            fmt(", last/first=%.3f (need < %.3f)", v.back() / v.front(), ratio) + "; ";
  (void)id;
}

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

struct GraphInverseProblem {
  PointCloud cloud;
  GraphSpectrum spectrum;
  DiagonalGaussianMeasure prior;
  Eigen::MatrixXd forward;
  DataVector data;
  PosteriorGaussian posterior;
};

/// The n-point graph problem with data synthesized from the continuum model.
GraphInverseProblem graph_problem(const ExperimentConfig& c, std::size_t n, std::uint64_t seed) {
  const Manifold mf = c.make_manifold();
  PointCloud cloud = sample(mf, n, seed);
  const double eps = epsilon_auto(n, mf.intrinsic_dim(), c.s, c.length_scale());
  GraphSpectrum spec = graph_spectrum(graph_laplacian(build_graph(cloud, eps)), n);
  auto prior = graph_prior(spec, c.alpha, c.s, mf.intrinsic_dim());
  const auto setup = observation_setup(cloud, c.p, c.delta, c.noise, c.normalize_observation);
  Eigen::MatrixXd g = graph_forward_operator(cloud, spec, setup, c.t);
  const auto prior_c = continuum_prior(mf, c.alpha, c.s, 0, c.tail_target);
  const auto cont = continuum_spectrum(mf, prior_c.truncation());
  auto data = synthesize_data(prior_c, continuum_forward_operator(cont, prior_c.truncation(), setup, c.t),
                              c.noise, seed);
  auto post = conjugate_posterior(prior, g, data.y, c.noise.scale);
  return {std::move(cloud), std::move(spec), std::move(prior), std::move(g), std::move(data), std::move(post)};
}

}  // namespace

int main() {
  const ExperimentConfig config;  // defaults: circle, n in {250, 500, 1000, 2000}
  config.validate();

  // ---- 1-6: the default convergence sweep ----
  const auto t0 = std::chrono::steady_clock::now();
  const ConvergenceReport report = run_convergence(config);
  const double sweep_seconds = seconds_since(t0);
  std::printf("sweep: %zu replicates in %.1f s\n", report.replicates.size(), sweep_seconds);
  for (const auto& r : report.replicates)
    if (!r.ok) std::printf("  replicate n=%zu seed=%llu failed: %s\n", r.n,
                           static_cast<unsigned long long>(r.seed), r.error.c_str());

  {
    bool ok = sweep_seconds < kSweepSeconds;
    double worst = 0.0;
    std::size_t worst_mode = 0;
    std::string detail;
    const auto& last = report.rows.back();
    for (std::size_t i = 0; i < config.k_report; ++i) {
      if (last.eig_rel_error[i] > worst) {
        worst = last.eig_rel_error[i];
        worst_mode = i + 1;
      }
    }
    ok = ok && worst < kEigRelErrorMax;
    // Mode 1 (lambda = 0 on both sides) carries only round-off; its trend is not meaningful.
    std::string inversions;
    for (std::size_t i = 1; i < config.k_report; ++i) {
      std::size_t inv = 0;
      for (std::size_t r = 1; r < report.rows.size(); ++r)
        if (report.rows[r].eig_rel_error[i] >= report.rows[r - 1].eig_rel_error[i]) ++inv;
      if (inv > kEigInversionsAllowed) ok = false;
      inversions += std::to_string(inv);
    }
    detail = fmt("max rel error at n=%.0f: %.4f (mode %.0f, need < 0.10); ", double(last.n), worst,
                 double(worst_mode)) +
             "inversions per mode 2..9: " + inversions + fmt(" (<= 1 each); sweep %.1f s", sweep_seconds);
    verdict(1, ok, detail);
  }
  {
    const auto v = check_rates(report, report.continuum_eigenvalues);
    verdict(2, v.pass(), fmt("C=%.4g, stability ratio %.3f (need finite and < %.0f)", v.c,
                             v.stability_ratio, kRateStabilityLimit));
  }
  {
    bool ok = true;
    std::string d;
    decreasing_with_ratio(3, "prior", column(report, &ReportRow::prior_tl2), kPriorRatio, d, ok);
    verdict(3, ok, d);
  }
  {
    bool ok = true;
    std::string d;
    decreasing_with_ratio(4, "forward", column(report, &ReportRow::forward_tl2), kForwardRatio, d, ok);
    verdict(4, ok, d);
  }
  {
    bool ok = true;
    std::string d;
    decreasing_with_ratio(5, "observation", column(report, &ReportRow::observation_error),
                          kObservationRatio, d, ok);
    verdict(5, ok, d);
  }
  {
    bool ok = true;
    std::string d;
    decreasing_with_ratio(6, "mean", column(report, &ReportRow::posterior_mean_tl2), kPosteriorRatio, d, ok);
    decreasing_with_ratio(6, "posterior", column(report, &ReportRow::posterior_tl2), kPosteriorRatio, d, ok);
    decreasing_with_ratio(6, "pushforward", column(report, &ReportRow::pushforward_tl2), kPosteriorRatio,
                          d, ok);
    verdict(6, ok, d);
  }

  // ---- 7-8: the n = 500 graph inverse problem ----
  const auto problem = graph_problem(config, 500, config.seeds.front());
  {
    const auto t1 = std::chrono::steady_clock::now();
    PcnOptions opt;
    opt.n_steps = 200000;
    opt.burn_in = 10000;
    opt.beta = 0.2;
    opt.seed = config.seeds.front();
    const auto res = pcn_sample(
        problem.prior,
        [&](const Eigen::VectorXd& u) { return potential(u, problem.data.y, problem.forward, config.noise); },
        opt);
    const double secs = seconds_since(t1);
    double worst_z = 0.0, worst_var = 0.0;
    for (Eigen::Index i = 0; i < 9; ++i) {
      worst_z = std::max(worst_z, std::fabs(res.mean(i) - problem.posterior.mean(i)) / res.mean_stderr(i));
      worst_var = std::max(worst_var,
                           std::fabs(res.variance(i) / problem.posterior.covariance(i, i) - 1.0));
    }
    const bool ok = worst_z <= kPcnMeanSe && worst_var <= kPcnVarRel && secs < kPcnSeconds;
    verdict(7, ok, fmt("max |mean error|/se %.2f (<= 3), max variance rel error %.3f (<= 0.10), ", worst_z,
                       worst_var) +
                       fmt("acceptance %.3f, %.1f s", res.acceptance_rate, secs));
  }
  {
    LinearGaussianPotential phi{problem.forward, problem.data.y, config.noise.scale};
    const auto& post = problem.posterior;
    const double j_post = j_functional(post.mean, post.covariance, problem.prior, phi).value;
    Rng rng(stream_key(config.seeds.front(), Stage::test, 8));
    const Eigen::VectorXd sd = post.covariance.diagonal().cwiseSqrt();
    int violations = 0;
    double min_gap = 1e300;
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd mean = post.mean;
      Eigen::VectorXd scale(mean.size());
      for (Eigen::Index i = 0; i < mean.size(); ++i) {
        mean(i) += 0.1 * sd(i) * rng.normal();
        scale(i) = 0.8 + (1.25 - 0.8) * rng.uniform();
      }
      const Eigen::MatrixXd cov = scale.asDiagonal() * post.covariance * scale.asDiagonal();
      const double j = j_functional(mean, cov, problem.prior, phi).value;
      min_gap = std::min(min_gap, j - j_post);
      if (j < j_post - kJSlack) ++violations;
    }
    verdict(8, violations == 0,
            fmt("J(mu)=%.6f, %.0f violations of 20, smallest J(nu)-J(mu)=%.3g", j_post, violations, min_gap));
  }

  // ---- 9: TL2 metric axioms ----
  {
    const Manifold m = Manifold::circle();
    Rng rng(stream_key(9, Stage::test));
    int sym = 0, tri = 0, ident = 0, bound = 0;
    for (int t = 0; t < 100; ++t) {
      auto size = [&] { return 1 + static_cast<std::size_t>(rng.uniform() * 64); };
      const auto a = random_point(m, size(), 10 * t + 1, t % 2 == 0);
      const auto b = random_point(m, size(), 10 * t + 2, t % 3 == 0);
      const auto c = random_point(m, size(), 10 * t + 3, false);
      const double ab = tl2_distance(a, b), ba = tl2_distance(b, a);
      if (ab != ba) ++sym;
      if (tl2_distance(a, c) > ab + tl2_distance(b, c) + kTriangleSlack) ++tri;
      if (tl2_distance(a, a) != 0.0 || !(ab > 0.0)) ++ident;
    }
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 62);
      const auto a = random_point(m, n, 5000 + t, true), b = random_point(m, n, 6000 + t, true);
      std::vector<std::uint32_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0u);
      for (std::size_t i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1))]);
      if (tl2_distance(a, b) > tl2_distance(a, b, perm) + 1e-12) ++bound;
    }
    verdict(9, sym + tri + ident + bound == 0,
            "violations: symmetry " + std::to_string(sym) + ", triangle " + std::to_string(tri) +
                ", identity " + std::to_string(ident) + ", exact > map bound " + std::to_string(bound));
  }

  // ---- 10: invariant suites ----
  {
    std::vector<std::string> failed;
    const auto& spec = problem.spectrum;
    const double n = static_cast<double>(spec.points());
    // Orthonormality in L2(gamma_n).
    const Eigen::MatrixXd gram = spec.vectors.leftCols(50).transpose() * spec.vectors.leftCols(50) / n;
    if ((gram - Eigen::MatrixXd::Identity(50, 50)).cwiseAbs().maxCoeff() > kInvariantTol)
      failed.push_back("orthonormality");
    // Dirichlet form: (1/n) psi_i^T L_n psi_i = lambda_i^n, and the pairwise-difference form.
    const double eps = epsilon_auto(500, 1, config.s, config.length_scale());
    const auto graph = build_graph(problem.cloud, eps);
    const auto lap = graph_laplacian(graph);
    const Eigen::SparseMatrix<double> ln = lap.normalized();
    for (Eigen::Index i = 0; i < 9; ++i) {
      const Eigen::VectorXd v = spec.vectors.col(i);
      const double form = v.dot(ln * v) / n;
      double pairs = 0.0;
      for (Eigen::Index c = 0; c < graph.weights.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(graph.weights, c); it; ++it)
          pairs += 0.5 * it.value() * std::pow(v(it.row()) - v(it.col()), 2);
      pairs *= lap.spectral_scale / n;
      if (std::fabs(form - spec.eigenvalues(i)) > 1e-8 * (1 + spec.eigenvalues(i)) ||
          std::fabs(pairs - form) > 1e-8 * (1 + form)) {
        failed.push_back("dirichlet form");
        break;
      }
    }
    // Semigroup, contraction, mean preservation.
    Eigen::VectorXd u(spec.points());
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = std::cos(problem.cloud.chart(i).a) + 0.4;
    const Eigen::VectorXd f1 = forward_heat(spec, forward_heat(spec, u, 0.4), 0.6);
    const Eigen::VectorXd f = forward_heat(spec, u, 1.0);
    if ((f1 - f).cwiseAbs().maxCoeff() > kInvariantTol) failed.push_back("semigroup");
    if (f.norm() > u.norm()) failed.push_back("contraction");
    if (std::fabs(f.mean() - u.mean()) > kInvariantTol) failed.push_back("mean preservation");
    // P_n pushes the continuum prior onto the graph prior.
    const auto cont = continuum_spectrum(Manifold::circle(), 9);
    const auto prior_c = continuum_prior(Manifold::circle(), config.alpha, config.s, 9);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(9);
    const std::size_t draws = 10000;
    for (std::size_t r = 0; r < draws; ++r) {
      const Eigen::VectorXd a = sample_coefficients(prior_c, stream_key(10, Stage::test, r));
      sq += projection_coefficients({a.data(), 9}, {spec.eigenvalues.data(), 9}, cont.eigenvalues(),
                                    config.alpha, config.s)
                .cwiseAbs2();
    }
    for (Eigen::Index i = 0; i < 9; ++i) {
      if (std::fabs(std::sqrt(sq(i) / draws) / problem.prior.stds()(i) - 1.0) > kPushforwardStdRel) {
        failed.push_back("P_n pushforward law");
        break;
      }
    }
    // KL nonnegativity.
    Rng rng(stream_key(10, Stage::test));
    for (int t = 0; t < 200; ++t) {
      Eigen::VectorXd ma(9), sa(9), mb(9), sb(9);
      for (int i = 0; i < 9; ++i) {
        ma(i) = rng.normal();
        mb(i) = rng.normal();
        sa(i) = 0.05 + rng.uniform();
        sb(i) = 0.05 + rng.uniform();
      }
      if (kl_divergence(DiagonalGaussianMeasure("b", ma, sa), DiagonalGaussianMeasure("b", mb, sb)) < 0.0) {
        failed.push_back("KL nonnegativity");
        break;
      }
    }
    // Determinism: byte-identical reports from a rerun.
    ExperimentConfig small = config;
    small.n_grid = {250, 500};
    small.seeds = {1, 2};
    small.mc_seeds = 1;
    small.mc_pairs = 20;
    const std::string a = report_csv(run_convergence(small));
    const std::string b = report_csv(run_convergence(small));
    if (a != b) failed.push_back("determinism");
    std::string d = failed.empty() ? "all invariant suites hold" : "failed:";
    for (const auto& s : failed) d += " " + s;
    verdict(10, failed.empty(), d);
  }

  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
