#include "gbip/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "gbip/errors.hpp"
#include "gbip/graph.hpp"
#include "gbip/rng.hpp"
#include "gbip/spectral_measures.hpp"
#include "gbip/transport.hpp"

namespace gbip {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

class StageTimer {
 public:
  explicit StageTimer(Replicate& r) : r_(r), last_(clock::now()) {}
  void mark(const char* stage) {
    const auto now = clock::now();
    r_.timings.emplace_back(stage, std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

 private:
  using clock = std::chrono::steady_clock;
  Replicate& r_;
  clock::time_point last_;
};

Eigen::MatrixXd basis_matrix(const ContinuumSpectrum& spec, std::span<const ChartPoint> pts,
                             std::size_t k) {
  const auto vals = spec.evaluate(pts, k);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      vals.data(), static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(k));
}

}  // namespace

// ---- epsilon schedule ----

double log_exponent(int m) {
  if (m < 1) throw ValidationError("intrinsic dimension must be >= 1");
  if (m == 1) return 1.0;
  if (m == 2) return 0.75;
  return 1.0 / m;
}

EpsilonBounds epsilon_bounds(std::size_t n, int m, double s, double length_scale) {
  if (n < 2) throw ValidationError("epsilon schedule: n must be >= 2");
  if (!(s > 0.0)) throw ValidationError("epsilon schedule: s must be > 0");
  const double nn = static_cast<double>(n);
  return {length_scale * std::pow(std::log(nn), log_exponent(m)) / std::pow(nn, 1.0 / m),
          length_scale * std::pow(nn, -1.0 / s)};
}

double epsilon_auto(std::size_t n, int m, double s, double length_scale) {
  const auto b = epsilon_bounds(n, m, s, length_scale);
  if (!(b.lower < b.upper)) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "epsilon schedule: empty admissible window at n=" << n << " (m=" << m << ", s=" << s
        << "): lower bound " << b.lower << " >= upper bound " << b.upper
        << "; n is too small for this s and m";
    throw ValidationError(msg.str());
  }
  return std::sqrt(b.lower * b.upper);
}

double ExperimentConfig::length_scale() const {
  return epsilon.length_scale ? *epsilon.length_scale : make_manifold().length_scale();
}

double ExperimentConfig::epsilon_for(std::size_t index) const {
  if (index >= n_grid.size()) throw ValidationError("epsilon: grid index out of range");
  const int m = make_manifold().intrinsic_dim();
  if (epsilon.kind == EpsilonRule::Kind::auto_geomean) {
    return epsilon_auto(n_grid[index], m, s, length_scale());
  }
  return epsilon.values.at(index);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("config: " + what); };
  const Manifold mf = make_manifold();
  const int m = mf.intrinsic_dim();
  if (n_grid.empty()) fail("n_grid must not be empty");
  std::set<std::size_t> unique(n_grid.begin(), n_grid.end());
  if (unique.size() != n_grid.size()) fail("n_grid entries must be distinct");
  for (auto n : n_grid)
    if (n < 2) fail("every n must be >= 2");
  if (!(alpha > 0.0)) fail("alpha must be > 0 (alpha + lambda_1 = alpha)");
  if (!(s > m)) fail("s must exceed the intrinsic dimension");
  if (!(t >= 0.0)) fail("t must be >= 0");
  if (!(delta > 0.0)) fail("delta must be > 0");
  noise.validate();
  const std::size_t n_min = *unique.begin();
  if (p > n_min) fail("p exceeds the smallest n");
  if (k_report < 1 || k_report > n_min) fail("k_report must lie in [1, min n]");
  if (!(k_n_constant > 0.0)) fail("k_n_constant must be > 0");
  if (seeds.empty()) fail("seeds must not be empty");
  if (mc_seeds > seeds.size()) fail("mc_seeds exceeds the number of seeds");
  if (mc_pairs < 2) fail("mc_pairs must be >= 2");
  if (resolution < 2) fail("resolution must be >= 2");
  if (!(tail_target > 0.0)) fail("tail_target must be > 0");
  if (test_coefficients.empty()) fail("test_coefficients must not be empty");
  if (epsilon.length_scale && !(*epsilon.length_scale > 0.0)) fail("length_scale must be > 0");
  if (epsilon.kind == EpsilonRule::Kind::explicit_list &&
      epsilon.values.size() != n_grid.size()) {
    fail("explicit epsilon list must have one value per n");
  }
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    const auto b = epsilon_bounds(n_grid[i], m, s, length_scale());
    const double e = epsilon_for(i);  // throws on an empty window
    if (!(e > b.lower && e < b.upper)) {
      std::ostringstream msg;
      msg << "epsilon " << e << " at n=" << n_grid[i] << " is outside (" << b.lower << ", "
          << b.upper << ")";
      fail(msg.str());
    }
  }
}

// ---- config JSON ----

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string("config: ") + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      throw ValidationError(std::string("config: unknown key '") + it.key() + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"manifold", "n_grid", "epsilon", "alpha", "s", "t", "p", "delta", "noise",
                  "normalize_observation", "k_report", "k_n_constant", "seeds", "mc_seeds",
                  "mc_pairs", "resolution", "tail_target", "full_spectrum_limit",
                  "test_coefficients", "output_dir"},
                 "config");
  ExperimentConfig c;
  if (j.contains("manifold")) {
    std::string name;
    read(j, "manifold", name);
    c.manifold = manifold_kind_from_string(name);
  }
  read(j, "n_grid", c.n_grid);
  if (j.contains("epsilon")) {
    const json& e = j.at("epsilon");
    reject_unknown(e, {"rule", "values", "length_scale"}, "epsilon");
    std::string rule = "auto_geomean";
    read(e, "rule", rule);
    if (rule == "auto_geomean") {
      c.epsilon.kind = EpsilonRule::Kind::auto_geomean;
    } else if (rule == "explicit") {
      c.epsilon.kind = EpsilonRule::Kind::explicit_list;
      read(e, "values", c.epsilon.values);
    } else {
      throw ValidationError("config: epsilon rule must be auto_geomean or explicit");
    }
    if (e.contains("length_scale")) {
      const json& ls = e.at("length_scale");
      if (ls.is_string() && ls.get<std::string>() == "manifold") {
        c.epsilon.length_scale.reset();
      } else if (ls.is_number()) {
        c.epsilon.length_scale = ls.get<double>();
      } else {
        throw ValidationError("config: length_scale must be \"manifold\" or a number");
      }
    }
  }
  read(j, "alpha", c.alpha);
  read(j, "s", c.s);
  read(j, "t", c.t);
  read(j, "p", c.p);
  read(j, "delta", c.delta);
  if (j.contains("noise")) {
    const json& nz = j.at("noise");
    reject_unknown(nz, {"model", "scale"}, "noise");
    std::string model = to_string(c.noise.kind);
    read(nz, "model", model);
    c.noise.kind = noise_kind_from_string(model);
    read(nz, "scale", c.noise.scale);
  }
  read(j, "normalize_observation", c.normalize_observation);
  read(j, "k_report", c.k_report);
  read(j, "k_n_constant", c.k_n_constant);
  read(j, "seeds", c.seeds);
  read(j, "mc_seeds", c.mc_seeds);
  read(j, "mc_pairs", c.mc_pairs);
  read(j, "resolution", c.resolution);
  read(j, "tail_target", c.tail_target);
  read(j, "full_spectrum_limit", c.full_spectrum_limit);
  read(j, "test_coefficients", c.test_coefficients);
  read(j, "output_dir", c.output_dir);
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json eps = {{"rule", c.epsilon.kind == EpsilonRule::Kind::auto_geomean ? "auto_geomean"
                                                                          : "explicit"}};
  if (c.epsilon.kind == EpsilonRule::Kind::explicit_list) eps["values"] = c.epsilon.values;
  if (c.epsilon.length_scale) {
    eps["length_scale"] = *c.epsilon.length_scale;
  } else {
    eps["length_scale"] = "manifold";
  }
  return {
      {"manifold", to_string(c.manifold)},
      {"n_grid", c.n_grid},
      {"epsilon", eps},
      {"alpha", c.alpha},
      {"s", c.s},
      {"t", c.t},
      {"p", c.p},
      {"delta", c.delta},
      {"noise", {{"model", to_string(c.noise.kind)}, {"scale", c.noise.scale}}},
      {"normalize_observation", c.normalize_observation},
      {"k_report", c.k_report},
      {"k_n_constant", c.k_n_constant},
      {"seeds", c.seeds},
      {"mc_seeds", c.mc_seeds},
      {"mc_pairs", c.mc_pairs},
      {"resolution", c.resolution},
      {"tail_target", c.tail_target},
      {"full_spectrum_limit", c.full_spectrum_limit},
      {"test_coefficients", c.test_coefficients},
      {"output_dir", c.output_dir},
  };
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---- one replicate ----

Replicate run_replicate(const ExperimentConfig& config, std::size_t grid_index,
                        std::uint64_t seed, bool with_mc) {
  Replicate r;
  r.n = config.n_grid.at(grid_index);
  r.seed = seed;
  StageTimer timer(r);
  const Manifold mf = config.make_manifold();
  const int m = mf.intrinsic_dim();
  const std::size_t n = r.n;

  r.epsilon = config.epsilon_for(grid_index);
  r.k_n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(
             config.k_n_constant *
             std::ceil(std::pow(config.length_scale() / r.epsilon, static_cast<double>(m))))));

  const PointCloud cloud = sample(mf, n, seed);
  const GeometricGraph graph = build_graph(cloud, r.epsilon);
  r.component_count = graph.component_count;
  for (const auto& w : graph.warnings) r.warnings.push_back(w.code + ": " + w.message);
  timer.mark("graph");

  const DiagonalGaussianMeasure prior_c =
      continuum_prior(mf, config.alpha, config.s, 0, config.tail_target);
  const std::size_t K = prior_c.truncation();
  const ContinuumSpectrum cont = continuum_spectrum(mf, std::max(K, config.k_report));
  timer.mark("continuum");

  const std::size_t k_graph = n <= config.full_spectrum_limit ? n : std::min(n, std::max(K, config.k_report));
  const GraphSpectrum spec = graph_spectrum(graph_laplacian(graph), k_graph);
  r.graph_modes = spec.size();
  timer.mark("spectrum");
  for (std::size_t i = 0; i < config.k_report; ++i) {
    const double ln = spec.eigenvalues(static_cast<Eigen::Index>(i));
    const double lc = cont.eigenvalue(i);
    const double abs_err = std::fabs(ln - lc);
    r.graph_eigenvalues.push_back(ln);
    r.eig_abs_error.push_back(abs_err);
    r.eig_rel_error.push_back(lc > 0.0 ? abs_err / lc : abs_err);
  }

  const TransportMap map = transport_map(mf, cloud, config.resolution);
  r.t_n = map.t_n();
  timer.mark("transport");
  r.ok = true;

  // Continuum basis on the map's source nodes.
  const Eigen::MatrixXd psi_src = basis_matrix(cont, map.source().charts, K);
  const DiagonalGaussianMeasure prior_n = graph_prior(spec, config.alpha, config.s, m);

  // Deterministic per-cloud diagnostics: forward map and observation on the
  // test function, and the posterior mean.
  const auto& a_vec = config.test_coefficients;
  if (a_vec.size() > K) throw ValidationError("test function has more modes than the truncation");
  const Eigen::Map<const Eigen::VectorXd> a(a_vec.data(), static_cast<Eigen::Index>(a_vec.size()));
  const Eigen::VectorXd u_cloud = basis_matrix(cont, cloud.charts(), a_vec.size()) * a;
  {
    const Eigen::VectorXd fn = forward_heat(spec, u_cloud, config.t);
    const Eigen::VectorXd fc =
        psi_src.leftCols(a.size()) * forward_heat(a, cont.eigenvalues(), config.t);
    r.forward_tl2 = transported_distance(map, {fc.data(), static_cast<std::size_t>(fc.size())},
                                         {fn.data(), static_cast<std::size_t>(fn.size())});
  }
  const ObservationSetup setup = observation_setup(cloud, config.p, config.delta, config.noise,
                                                   config.normalize_observation);
  {
    const Eigen::VectorXd on = observe_cloud(cloud, u_cloud, setup).values;
    const Eigen::VectorXd oc = observe_continuum_modes(cont, a_vec.size(), setup) * a;
    r.observation_error = (on - oc).norm();
  }
  timer.mark("forward");

  const bool gaussian = config.noise.kind == NoiseKind::gaussian;
  if (!gaussian) {
    r.warnings.push_back("posterior: closed form needs Gaussian noise; posterior columns skipped");
  }
  // Posterior: shared synthetic data from the continuum model.
  std::optional<PosteriorGaussian> post_n, post_c;
  if (gaussian) {
    const Eigen::MatrixXd g_c = continuum_forward_operator(cont, K, setup, config.t);
    const DataVector data = synthesize_data(prior_c, g_c, config.noise, seed);
    const Eigen::MatrixXd g_n = graph_forward_operator(cloud, spec, setup, config.t);
    post_n = conjugate_posterior(prior_n, g_n, data.y, config.noise.scale);
    post_c = conjugate_posterior(prior_c, g_c, data.y, config.noise.scale);
    const Eigen::VectorXd mn = spec.vectors * post_n->mean;
    const Eigen::VectorXd mc = psi_src * post_c->mean;
    r.posterior_mean_tl2 = transported_distance(
        map, {mc.data(), static_cast<std::size_t>(mc.size())},
        {mn.data(), static_cast<std::size_t>(mn.size())});
    timer.mark("posterior");
  }
  if (!with_mc) return r;

  // Monte Carlo distances between measures, coupled through the rotation
  // that pairs graph modes with continuum modes. Seeds do not depend on n,
  // so the sweep uses common random numbers across the grid.
  const std::size_t k_align = cont.complete_cluster_prefix(std::min(spec.size(), K));
  const auto rotation = alignment_rotation(spec, cont, map, k_align);
  timer.mark("align");
  auto distance = [&](const CoefficientLaw& graph_law, const CoefficientLaw& cont_law,
                      Stage stage) {
    const NodalGaussianField gn{spec.vectors, graph_law.with_input_rotation(rotation)};
    const NodalGaussianField gc{psi_src, cont_law};
    return measure_distance_tl2(gn, gc, map, config.mc_pairs, stream_key(seed, stage),
                                Coupling::shared_xi);
  };
  const auto dp = distance(CoefficientLaw::of(prior_n), CoefficientLaw::of(prior_c), Stage::prior);
  r.prior_tl2 = dp.estimate;
  r.prior_tl2_se = dp.stderr_;
  timer.mark("prior_mc");
  if (gaussian) {
    const auto dq = distance(post_n->law, post_c->law, Stage::posterior);
    r.posterior_tl2 = dq.estimate;
    r.posterior_tl2_se = dq.stderr_;
    const Eigen::VectorXd hn = heat_multipliers({spec.eigenvalues.data(), spec.size()}, config.t);
    const Eigen::VectorXd hc =
        heat_multipliers(std::span<const double>(cont.eigenvalues()).first(K), config.t);
    const auto df = distance(post_n->law.scaled(hn), post_c->law.scaled(hc), Stage::forward);
    r.pushforward_tl2 = df.estimate;
    r.pushforward_tl2_se = df.stderr_;
    timer.mark("posterior_mc");
  }
  r.has_mc = true;
  return r;
}

// ---- sweep ----

ConvergenceReport run_convergence(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  ConvergenceReport report;
  report.config = config;
  const Manifold mf = config.make_manifold();
  const auto prior_c = continuum_prior(mf, config.alpha, config.s, 0, config.tail_target);
  report.continuum_modes = prior_c.truncation();
  report.continuum_tail = prior_c.tail_bound();
  const auto cont = continuum_spectrum(mf, config.k_report);
  report.continuum_eigenvalues = cont.eigenvalues();

  std::vector<std::size_t> order(config.n_grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return config.n_grid[x] < config.n_grid[y]; });
  for (const std::size_t idx : order) {
    for (std::size_t si = 0; si < config.seeds.size(); ++si) {
      Replicate r;
      try {
        r = run_replicate(config, idx, config.seeds[si], si < config.mc_seeds);
      } catch (const std::exception& e) {
        r = Replicate{};
        r.n = config.n_grid[idx];
        r.seed = config.seeds[si];
        r.ok = false;
        r.error = e.what();
        try {
          r.epsilon = config.epsilon_for(idx);
        } catch (...) {
        }
      }
      if (progress) progress(r);
      report.replicates.push_back(std::move(r));
    }
  }
  aggregate(report);
  return report;
}

void aggregate(ConvergenceReport& report) {
  const std::size_t k = report.config.k_report;
  std::vector<std::size_t> ns;
  for (const auto& r : report.replicates)
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
  std::sort(ns.begin(), ns.end());
  report.rows.clear();
  for (const std::size_t n : ns) {
    ReportRow row;
    row.n = n;
    std::vector<double> eps, tn;
    std::vector<std::vector<double>> rel(k), abs(k);
    std::vector<double> prior, prior_se, fwd, obs, pmean, post, post_se, push, push_se;
    for (const auto& r : report.replicates) {
      if (r.n != n) continue;
      row.epsilon = r.epsilon;
      if (!r.ok) {
        ++row.seeds_failed;
        continue;
      }
      ++row.seeds_ok;
      eps.push_back(r.epsilon);
      tn.push_back(r.t_n);
      row.component_count = std::max(row.component_count, r.component_count);
      row.k_n = r.k_n;
      for (std::size_t i = 0; i < k && i < r.eig_rel_error.size(); ++i) {
        rel[i].push_back(r.eig_rel_error[i]);
        abs[i].push_back(r.eig_abs_error[i]);
      }
      // NaN entries (not computed for this replicate) drop out of the medians.
      fwd.push_back(r.forward_tl2);
      obs.push_back(r.observation_error);
      pmean.push_back(r.posterior_mean_tl2);
      if (!r.has_mc) continue;
      prior.push_back(r.prior_tl2);
      prior_se.push_back(r.prior_tl2_se);
      post.push_back(r.posterior_tl2);
      post_se.push_back(r.posterior_tl2_se);
      push.push_back(r.pushforward_tl2);
      push_se.push_back(r.pushforward_tl2_se);
    }
    if (!eps.empty()) row.epsilon = median(eps);
    row.t_n = median(tn);
    for (std::size_t i = 0; i < k; ++i) {
      row.eig_rel_error.push_back(median(rel[i]));
      row.eig_abs_error.push_back(median(abs[i]));
    }
    row.prior_tl2 = median(prior);
    row.prior_tl2_se = median(prior_se);
    row.forward_tl2 = median(fwd);
    row.observation_error = median(obs);
    row.posterior_mean_tl2 = median(pmean);
    row.posterior_tl2 = median(post);
    row.posterior_tl2_se = median(post_se);
    row.pushforward_tl2 = median(push);
    row.pushforward_tl2_se = median(push_se);
    report.rows.push_back(std::move(row));
  }

  std::vector<double> nv;
  for (const auto& row : report.rows) nv.push_back(static_cast<double>(row.n));
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& row : report.rows) v.push_back(get(row));
    return v;
  };
  report.slopes.clear();
  report.slopes.push_back(fit_slope("t_n", nv, column([](const ReportRow& r) { return r.t_n; })));
  for (std::size_t i = 1; i < k; ++i) {
    report.slopes.push_back(fit_slope("eig_rel_error_" + std::to_string(i + 1), nv,
                                      column([i](const ReportRow& r) { return r.eig_rel_error[i]; })));
  }
  report.slopes.push_back(fit_slope("prior_tl2", nv, column([](const ReportRow& r) { return r.prior_tl2; })));
  report.slopes.push_back(fit_slope("forward_tl2", nv, column([](const ReportRow& r) { return r.forward_tl2; })));
  report.slopes.push_back(fit_slope("observation_error", nv,
                                    column([](const ReportRow& r) { return r.observation_error; })));
  report.slopes.push_back(fit_slope("posterior_mean_tl2", nv,
                                    column([](const ReportRow& r) { return r.posterior_mean_tl2; })));
  report.slopes.push_back(fit_slope("posterior_tl2", nv,
                                    column([](const ReportRow& r) { return r.posterior_tl2; })));
  report.slopes.push_back(fit_slope("pushforward_tl2", nv,
                                    column([](const ReportRow& r) { return r.pushforward_tl2; })));
}

SlopeFit fit_slope(const std::string& column, const std::vector<double>& n,
                   const std::vector<double>& values) {
  SlopeFit fit;
  fit.column = column;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < n.size() && i < values.size(); ++i)
    if (n[i] > 0.0 && values[i] > 0.0 && std::isfinite(values[i]))
      pts.emplace_back(std::log(n[i]), std::log(values[i]));
  std::sort(pts.begin(), pts.end());
  const std::size_t N = pts.size();
  if (N < 2) return fit;
  const std::size_t use = std::min(N, std::max<std::size_t>(3, (N + 1) / 2));
  pts.erase(pts.begin(), pts.end() - static_cast<std::ptrdiff_t>(use));
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(use);
  my /= static_cast<double>(use);
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  double ss = 0.0;
  for (const auto& [x, y] : pts) {
    const double e = y - (my + fit.slope * (x - mx));
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / static_cast<double>(use));
  fit.points = use;
  fit.defined = true;
  return fit;
}

RateVerdict check_rates(const ConvergenceReport& report,
                        const std::vector<double>& continuum_eigenvalues) {
  RateVerdict v;
  std::vector<double> per_row;
  for (const auto& row : report.rows) {
    double c_row = 0.0;
    bool usable = row.t_n > 0.0 && row.epsilon > 0.0 && !std::isnan(row.t_n);
    for (std::size_t i = 0; usable && i < row.eig_abs_error.size() && i < continuum_eigenvalues.size(); ++i) {
      const double bound = row.t_n / row.epsilon + std::sqrt(continuum_eigenvalues[i]) * row.epsilon;
      const double err = row.eig_abs_error[i];
      if (std::isnan(err)) {
        usable = false;
        break;
      }
      c_row = std::max(c_row, err / bound);
    }
    if (usable) per_row.push_back(c_row);
  }
  if (per_row.empty()) return v;
  double running = 0.0;
  for (double c : per_row) {
    running = std::max(running, c);
    v.fitted_c.push_back(running);
  }
  v.c = v.fitted_c.back();
  v.finite = std::all_of(v.fitted_c.begin(), v.fitted_c.end(),
                         [](double c) { return std::isfinite(c); });
  const double lo = v.fitted_c.front();
  v.stability_ratio = lo > 0.0 ? v.c / lo : std::numeric_limits<double>::infinity();
  v.stable = v.stability_ratio < kRateStabilityLimit;
  return v;
}

// ---- output ----

std::vector<std::string> report_columns(std::size_t k_report) {
  std::vector<std::string> cols = {"n", "epsilon", "t_n", "component_count", "k_n",
                                   "seeds_ok", "seeds_failed"};
  for (std::size_t i = 1; i <= k_report; ++i) cols.push_back("eig_rel_error_" + std::to_string(i));
  for (std::size_t i = 1; i <= k_report; ++i) cols.push_back("eig_abs_error_" + std::to_string(i));
  for (const char* c : {"prior_tl2", "prior_tl2_se", "forward_tl2", "observation_error",
                        "posterior_mean_tl2", "posterior_tl2", "posterior_tl2_se",
                        "pushforward_tl2", "pushforward_tl2_se"})
    cols.emplace_back(c);
  return cols;
}

std::string report_csv(const ConvergenceReport& report) {
  const auto cols = report_columns(report.config.k_report);
  std::ostringstream os;
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\r\n";
  for (const auto& row : report.rows) {
    std::vector<std::string> f = {std::to_string(row.n), fmt(row.epsilon), fmt(row.t_n),
                                  std::to_string(row.component_count), std::to_string(row.k_n),
                                  std::to_string(row.seeds_ok), std::to_string(row.seeds_failed)};
    for (double x : row.eig_rel_error) f.push_back(fmt(x));
    for (double x : row.eig_abs_error) f.push_back(fmt(x));
    for (double x : {row.prior_tl2, row.prior_tl2_se, row.forward_tl2, row.observation_error,
                     row.posterior_mean_tl2, row.posterior_tl2, row.posterior_tl2_se,
                     row.pushforward_tl2, row.pushforward_tl2_se})
      f.push_back(fmt(x));
    for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
    os << "\r\n";
  }
  return os.str();
}

namespace {

json num(double x) { return std::isnan(x) ? json(nullptr) : json(x); }

double num_of(const json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::vector<double> nums_of(const json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(num_of(x));
  return v;
}

}  // namespace

json report_json(const ConvergenceReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({
        {"n", r.n},
        {"epsilon", num(r.epsilon)},
        {"t_n", num(r.t_n)},
        {"component_count", r.component_count},
        {"k_n", r.k_n},
        {"seeds_ok", r.seeds_ok},
        {"seeds_failed", r.seeds_failed},
        {"eig_rel_error", nums(r.eig_rel_error)},
        {"eig_abs_error", nums(r.eig_abs_error)},
        {"prior_tl2", {{"estimate", num(r.prior_tl2)}, {"stderr", num(r.prior_tl2_se)}}},
        {"forward_tl2", num(r.forward_tl2)},
        {"observation_error", num(r.observation_error)},
        {"posterior_mean_tl2", num(r.posterior_mean_tl2)},
        {"posterior_tl2", {{"estimate", num(r.posterior_tl2)}, {"stderr", num(r.posterior_tl2_se)}}},
        {"pushforward_tl2",
         {{"estimate", num(r.pushforward_tl2)}, {"stderr", num(r.pushforward_tl2_se)}}},
    });
  }
  json reps = json::array();
  for (const auto& r : report.replicates) {
    reps.push_back({
        {"n", r.n},
        {"seed", r.seed},
        {"ok", r.ok},
        {"error", r.error},
        {"warnings", r.warnings},
        {"epsilon", num(r.epsilon)},
        {"t_n", num(r.t_n)},
        {"component_count", r.component_count},
        {"k_n", r.k_n},
        {"graph_modes", r.graph_modes},
        {"graph_eigenvalues", nums(r.graph_eigenvalues)},
        {"eig_abs_error", nums(r.eig_abs_error)},
        {"eig_rel_error", nums(r.eig_rel_error)},
        {"has_mc", r.has_mc},
        {"prior_tl2", num(r.prior_tl2)},
        {"prior_tl2_se", num(r.prior_tl2_se)},
        {"forward_tl2", num(r.forward_tl2)},
        {"observation_error", num(r.observation_error)},
        {"posterior_mean_tl2", num(r.posterior_mean_tl2)},
        {"posterior_tl2", num(r.posterior_tl2)},
        {"posterior_tl2_se", num(r.posterior_tl2_se)},
        {"pushforward_tl2", num(r.pushforward_tl2)},
        {"pushforward_tl2_se", num(r.pushforward_tl2_se)},
    });
  }
  json slopes = json::array();
  for (const auto& s : report.slopes) {
    slopes.push_back({{"column", s.column},
                      {"defined", s.defined},
                      {"slope", num(s.slope)},
                      {"residual", num(s.residual)},
                      {"points", s.points}});
  }
  return {
      {"schema_version", kReportSchemaVersion},
      {"columns", report_columns(report.config.k_report)},
      {"config", to_json(report.config)},
      {"continuum",
       {{"eigenvalues", report.continuum_eigenvalues},
        {"modes", report.continuum_modes},
        {"tail_bound", report.continuum_tail}}},
      {"rows", rows},
      {"replicates", reps},
      {"slopes", slopes},
  };
}

ConvergenceReport report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw ValidationError("report: unsupported schema_version");
    }
    ConvergenceReport report;
    report.config = config_from_json(j.at("config"));
    report.continuum_eigenvalues = j.at("continuum").at("eigenvalues").get<std::vector<double>>();
    report.continuum_modes = j.at("continuum").at("modes").get<std::size_t>();
    report.continuum_tail = j.at("continuum").at("tail_bound").get<double>();
    for (const auto& r : j.at("replicates")) {
      Replicate x;
      x.n = r.at("n").get<std::size_t>();
      x.seed = r.at("seed").get<std::uint64_t>();
      x.ok = r.at("ok").get<bool>();
      x.error = r.at("error").get<std::string>();
      x.warnings = r.at("warnings").get<std::vector<std::string>>();
      x.epsilon = num_of(r.at("epsilon"));
      x.t_n = num_of(r.at("t_n"));
      x.component_count = r.at("component_count").get<std::size_t>();
      x.k_n = r.at("k_n").get<std::size_t>();
      x.graph_modes = r.at("graph_modes").get<std::size_t>();
      x.graph_eigenvalues = nums_of(r.at("graph_eigenvalues"));
      x.eig_abs_error = nums_of(r.at("eig_abs_error"));
      x.eig_rel_error = nums_of(r.at("eig_rel_error"));
      x.has_mc = r.at("has_mc").get<bool>();
      x.prior_tl2 = num_of(r.at("prior_tl2"));
      x.prior_tl2_se = num_of(r.at("prior_tl2_se"));
      x.forward_tl2 = num_of(r.at("forward_tl2"));
      x.observation_error = num_of(r.at("observation_error"));
      x.posterior_mean_tl2 = num_of(r.at("posterior_mean_tl2"));
      x.posterior_tl2 = num_of(r.at("posterior_tl2"));
      x.posterior_tl2_se = num_of(r.at("posterior_tl2_se"));
      x.pushforward_tl2 = num_of(r.at("pushforward_tl2"));
      x.pushforward_tl2_se = num_of(r.at("pushforward_tl2_se"));
      report.replicates.push_back(std::move(x));
    }
    aggregate(report);
    return report;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report: malformed JSON: ") + e.what());
  }
}

std::string timings_csv(const ConvergenceReport& report) {
  std::ostringstream os;
  os << "n,seed,stage,seconds\r\n";
  for (const auto& r : report.replicates)
    for (const auto& [stage, sec] : r.timings)
      os << r.n << ',' << r.seed << ',' << stage << ',' << fmt(sec) << "\r\n";
  return os.str();
}

void write_report(const ConvergenceReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root / "plotdata");
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ValidationError("cannot write '" + p.string() + "'");
    os << text;
  };
  write(root / "report.csv", report_csv(report));
  write(root / "report.json", report_json(report).dump(2) + "\n");
  write(root / "timings.csv", timings_csv(report));

  auto series = [&](const std::string& name, auto value, auto err) {
    std::ostringstream os;
    os << "n\tvalue\tstderr\n";
    for (const auto& row : report.rows)
      os << row.n << '\t' << fmt(value(row)) << '\t' << fmt(err(row)) << '\n';
    write(root / "plotdata" / (name + ".tsv"), os.str());
  };
  auto zero = [](const ReportRow&) { return 0.0; };
  series("t_n", [](const ReportRow& r) { return r.t_n; }, zero);
  series("epsilon", [](const ReportRow& r) { return r.epsilon; }, zero);
  for (std::size_t i = 0; i < report.config.k_report; ++i) {
    series("eig_rel_error_" + std::to_string(i + 1),
           [i](const ReportRow& r) { return r.eig_rel_error[i]; }, zero);
  }
  series("prior_tl2", [](const ReportRow& r) { return r.prior_tl2; },
         [](const ReportRow& r) { return r.prior_tl2_se; });
  series("forward_tl2", [](const ReportRow& r) { return r.forward_tl2; }, zero);
  series("observation_error", [](const ReportRow& r) { return r.observation_error; }, zero);
  series("posterior_mean_tl2", [](const ReportRow& r) { return r.posterior_mean_tl2; }, zero);
  series("posterior_tl2", [](const ReportRow& r) { return r.posterior_tl2; },
         [](const ReportRow& r) { return r.posterior_tl2_se; });
  series("pushforward_tl2", [](const ReportRow& r) { return r.pushforward_tl2; },
         [](const ReportRow& r) { return r.pushforward_tl2_se; });
}

}  // namespace gbip
