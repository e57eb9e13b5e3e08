// gbip: command-line front end.
//
//   gbip sample | graph | spectrum | prior-draw | invert | tl2 | converge | check-rates
//
// Exit codes: 0 success, 1 invalid input (including unknown flags), 2 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gbip/errors.hpp"
#include "gbip/graph.hpp"
#include "gbip/harness.hpp"
#include "gbip/inversion.hpp"
#include "gbip/io.hpp"
#include "gbip/kernels.hpp"
#include "gbip/rng.hpp"
#include "gbip/spectral_measures.hpp"
#include "gbip/transport.hpp"

namespace fs = std::filesystem;
using namespace gbip;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;

  ExperimentConfig config() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (seed) {
      c.seeds = {*seed};
      c.mc_seeds = std::min<std::size_t>(c.mc_seeds, 1);
    }
    if (!out.empty()) c.output_dir = out;
    c.validate();
    return c;
  }
  std::uint64_t first_seed(const ExperimentConfig& c) const { return c.seeds.front(); }
};

fs::path out_dir(const ExperimentConfig& c) {
  fs::path p(c.output_dir);
  fs::create_directories(p);
  return p;
}

void say(const Globals& g, const std::string& line) {
  if (!g.quiet) std::cout << line << '\n';
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

/// Cloud from a file, or sampled with (n, seed).
PointCloud load_or_sample(const ExperimentConfig& c, const std::string& cloud_path, std::size_t n,
                          std::uint64_t seed) {
  if (!cloud_path.empty()) return cloud_from_json(read_json_file(cloud_path));
  return sample(c.make_manifold(), n, seed);
}

double epsilon_or_default(const ExperimentConfig& c, std::optional<double> eps, std::size_t n) {
  if (eps) return *eps;
  return epsilon_auto(n, c.make_manifold().intrinsic_dim(), c.s, c.length_scale());
}

struct GraphProblem {
  PointCloud cloud;
  double epsilon;
  GraphSpectrum spectrum;
};

GraphProblem graph_problem(const ExperimentConfig& c, const PointCloud& cloud,
                           std::optional<double> eps, std::size_t k) {
  const double e = epsilon_or_default(c, eps, cloud.size());
  const GeometricGraph graph = build_graph(cloud, e);
  for (const auto& w : graph.warnings) std::cerr << "warning: " << w.message << '\n';
  return {cloud, e, graph_spectrum(graph_laplacian(graph), k)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based Bayesian inversion of the heat equation on point clouds"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed (replaces the config's seed list)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::size_t n = 0;
  std::string cloud_path;
  std::optional<double> eps;
  std::size_t k = 0;

  auto* sample_cmd = app.add_subcommand("sample", "Sample a point cloud");
  sample_cmd->add_option("-n,--n", n, "Number of points")->required();

  auto* graph_cmd = app.add_subcommand("graph", "Build the epsilon-graph of a cloud");
  bool triplets = false;
  for (auto* cmd : {graph_cmd}) {
    cmd->add_option("-n,--n", n, "Sample a cloud of this size");
    cmd->add_option("--cloud", cloud_path, "Cloud JSON")->check(CLI::ExistingFile);
    cmd->add_option("--epsilon", eps, "Connectivity radius (default: schedule)");
  }
  graph_cmd->add_flag("--triplets", triplets, "Also write W as i j w lines");

  auto* spec_cmd = app.add_subcommand("spectrum", "Smallest graph Laplacian eigenpairs");
  spec_cmd->add_option("-n,--n", n, "Sample a cloud of this size");
  spec_cmd->add_option("--cloud", cloud_path, "Cloud JSON")->check(CLI::ExistingFile);
  spec_cmd->add_option("--epsilon", eps, "Connectivity radius (default: schedule)");
  spec_cmd->add_option("-k,--k", k, "Number of eigenpairs (default: k_report)");
  bool write_vectors = false;
  spec_cmd->add_flag("--vectors", write_vectors, "Write eigenvectors to vectors.bin");

  auto* prior_cmd = app.add_subcommand("prior-draw", "Coupled graph and continuum prior draws");
  prior_cmd->add_option("-n,--n", n, "Cloud size")->required();
  std::size_t grid = 256;
  prior_cmd->add_option("--grid", grid, "Continuum draw nodes per angle")->check(CLI::Range(2, 1 << 16));

  auto* inv_cmd = app.add_subcommand("invert", "Graph posterior for synthetic or given data");
  inv_cmd->add_option("-n,--n", n, "Cloud size (default: smallest n in the grid)");
  std::string data_path;
  inv_cmd->add_option("--data", data_path, "Data JSON {\"y\": [...]}")->check(CLI::ExistingFile);
  std::size_t pcn_steps = 0, burn_in = 10000;
  double beta = 0.2;
  std::string chain_path;
  inv_cmd->add_option("--pcn-steps", pcn_steps, "Also run pCN for this many steps");
  inv_cmd->add_option("--burn-in", burn_in, "pCN burn-in");
  inv_cmd->add_option("--beta", beta, "pCN step size in (0, 1]");
  inv_cmd->add_option("--chain", chain_path, "Binary chain output path");

  auto* tl2_cmd = app.add_subcommand("tl2", "TL2 distance between two serialized TL2 points");
  std::string tl2_a, tl2_b;
  tl2_cmd->add_option("a", tl2_a, "First TL2 point")->required()->check(CLI::ExistingFile);
  tl2_cmd->add_option("b", tl2_b, "Second TL2 point")->required()->check(CLI::ExistingFile);

  auto* conv_cmd = app.add_subcommand("converge", "Convergence sweep over the n grid");
  auto* rates_cmd = app.add_subcommand("check-rates", "Eigenvalue rate-envelope verdict");
  std::string report_path;
  rates_cmd->add_option("--report", report_path, "report.json (default: <out>/report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const ExperimentConfig c = g.config();
    const std::uint64_t seed = g.first_seed(c);

    if (*sample_cmd) {
      const PointCloud cloud = sample(c.make_manifold(), n, seed);
      const auto path = out_dir(c) / "cloud.json";
      write_json_file(path.string(), to_json(cloud));
      say(g, "wrote " + path.string());
    } else if (*graph_cmd) {
      if (cloud_path.empty() && n == 0) throw ValidationError("graph: give --n or --cloud");
      const PointCloud cloud = load_or_sample(c, cloud_path, n, seed);
      const double e = epsilon_or_default(c, eps, cloud.size());
      const GeometricGraph graph = build_graph(cloud, e);
      json warnings = json::array();
      for (const auto& w : graph.warnings) {
        warnings.push_back({{"code", w.code}, {"message", w.message}});
        std::cerr << "warning: " << w.message << '\n';
      }
      const auto dir = out_dir(c);
      write_json_file((dir / "graph.json").string(),
                      {{"n", cloud.size()},
                       {"epsilon", e},
                       {"weight", graph.kernel.weight(cloud.size())},
                       {"sigma_k", graph.kernel.sigma_k},
                       {"nonzeros", graph.weights.nonZeros()},
                       {"component_count", graph.component_count},
                       {"warnings", warnings}});
      if (triplets) write_triplets(graph, (dir / "weights.txt").string());
      say(g, "n=" + std::to_string(cloud.size()) + " epsilon=" + num(e) +
                 " components=" + std::to_string(graph.component_count) +
                 " nonzeros=" + std::to_string(graph.weights.nonZeros()));
    } else if (*spec_cmd) {
      if (cloud_path.empty() && n == 0) throw ValidationError("spectrum: give --n or --cloud");
      const PointCloud cloud = load_or_sample(c, cloud_path, n, seed);
      const auto prob = graph_problem(c, cloud, eps, k ? k : c.k_report);
      const auto dir = out_dir(c);
      write_json_file((dir / "spectrum.json").string(),
                      to_json(prob.spectrum, write_vectors ? (dir / "vectors.bin").string() : ""));
      const auto cont = continuum_spectrum(c.make_manifold(), prob.spectrum.size());
      say(g, "i  lambda_n  lambda");
      for (std::size_t i = 0; i < prob.spectrum.size(); ++i)
        say(g, std::to_string(i + 1) + "  " + num(prob.spectrum.eigenvalues(static_cast<Eigen::Index>(i))) +
                   "  " + num(cont.eigenvalue(i)));
    } else if (*prior_cmd) {
      const Manifold mf = c.make_manifold();
      const PointCloud cloud = sample(mf, n, seed);
      const auto prior_c = continuum_prior(mf, c.alpha, c.s, 0, c.tail_target);
      const std::size_t K = prior_c.truncation();
      const auto prob = graph_problem(c, cloud, std::nullopt,
                                      n <= c.full_spectrum_limit ? n : std::min(n, K));
      const auto cont = continuum_spectrum(mf, K);
      const TransportMap map = transport_map(mf, cloud, c.resolution);
      const auto rotation = alignment_rotation(
          prob.spectrum, cont, map, cont.complete_cluster_prefix(std::min(prob.spectrum.size(), K)));
      const auto prior_n = graph_prior(prob.spectrum, c.alpha, c.s, mf.intrinsic_dim());
      const std::size_t dim = std::max(prior_n.truncation(), K);
      const Eigen::VectorXd xi = standard_normals(dim, stream_key(seed, Stage::prior));
      const Eigen::VectorXd a_n = CoefficientLaw::of(prior_n).with_input_rotation(rotation).draw(xi);
      const Eigen::VectorXd a_c = CoefficientLaw::of(prior_c).draw(xi);
      const Eigen::VectorXd f_n = prob.spectrum.vectors * a_n;
      const QuadratureGrid qg = mf.quadrature_grid(grid);
      const auto psi = cont.evaluate(qg.charts, K);
      std::vector<double> f_c(qg.size(), 0.0);
      for (std::size_t p = 0; p < qg.size(); ++p)
        for (std::size_t i = 0; i < K; ++i) f_c[p] += psi[p * K + i] * a_c(static_cast<Eigen::Index>(i));
      const auto dir = out_dir(c);
      write_json_file((dir / "prior_graph.json").string(),
                      to_json(TL2Point::on_cloud(cloud, {f_n.data(), n})));
      write_json_file((dir / "prior_continuum.json").string(),
                      to_json(TL2Point::on_grid(qg, mf, f_c)));
      write_json_file((dir / "prior_coefficients.json").string(),
                      {{"graph", to_json(a_n)}, {"continuum", to_json(a_c)}, {"epsilon", prob.epsilon}});
      say(g, "wrote prior_graph.json, prior_continuum.json, prior_coefficients.json to " + dir.string());
    } else if (*inv_cmd) {
      const Manifold mf = c.make_manifold();
      if (n == 0) n = *std::min_element(c.n_grid.begin(), c.n_grid.end());
      const PointCloud cloud = sample(mf, n, seed);
      const auto prob = graph_problem(c, cloud, std::nullopt,
                                      n <= c.full_spectrum_limit ? n : std::min(n, c.k_report));
      const auto prior_n = graph_prior(prob.spectrum, c.alpha, c.s, mf.intrinsic_dim());
      const ObservationSetup setup =
          observation_setup(cloud, c.p, c.delta, c.noise, c.normalize_observation);
      const Eigen::MatrixXd g_n = graph_forward_operator(cloud, prob.spectrum, setup, c.t);
      DataVector data;
      if (!data_path.empty()) {
        data.y = vector_from_json(read_json_file(data_path).at("y"));
        data.provenance = "file";
        if (static_cast<std::size_t>(data.y.size()) != c.p)
          throw ValidationError("invert: data length differs from p");
      } else {
        const auto prior_c = continuum_prior(mf, c.alpha, c.s, 0, c.tail_target);
        const auto cont = continuum_spectrum(mf, prior_c.truncation());
        data = synthesize_data(prior_c, continuum_forward_operator(cont, prior_c.truncation(), setup, c.t),
                               c.noise, seed);
      }
      if (c.noise.kind != NoiseKind::gaussian)
        throw ValidationError("invert: the closed-form posterior needs Gaussian noise");
      const PosteriorGaussian post = conjugate_posterior(prior_n, g_n, data.y, c.noise.scale);
      json out = {{"n", n},
                  {"epsilon", prob.epsilon},
                  {"p", c.p},
                  {"data", to_json(data)},
                  {"prior", to_json(prior_n)},
                  {"posterior", to_json(post)}};
      if (pcn_steps > 0) {
        std::optional<ChainWriter> writer;
        if (!chain_path.empty()) writer.emplace(chain_path, prior_n.truncation(), prior_n.basis_ref());
        PcnOptions opt;
        opt.n_steps = pcn_steps;
        opt.burn_in = burn_in;
        opt.beta = beta;
        opt.seed = seed;
        opt.writer = writer ? &*writer : nullptr;
        const auto res = pcn_sample(
            prior_n, [&](const Eigen::VectorXd& u) { return potential(u, data.y, g_n, c.noise); }, opt);
        if (writer) writer->close();
        out["pcn"] = {{"steps", pcn_steps},
                      {"burn_in", burn_in},
                      {"beta", beta},
                      {"acceptance_rate", res.acceptance_rate},
                      {"mean", to_json(res.mean)},
                      {"mean_stderr", to_json(res.mean_stderr)},
                      {"variance", to_json(res.variance)}};
        say(g, "pCN acceptance rate " + num(res.acceptance_rate));
      }
      const auto path = out_dir(c) / "posterior.json";
      write_json_file(path.string(), out);
      say(g, "wrote " + path.string());
    } else if (*tl2_cmd) {
      const TL2Point a = tl2point_from_json(read_json_file(tl2_a));
      const TL2Point b = tl2point_from_json(read_json_file(tl2_b));
      std::printf("%.17g\n", tl2_distance(a, b));
    } else if (*conv_cmd) {
      ProgressFn progress;
      if (!g.quiet) {
        progress = [](const Replicate& r) {
          std::cerr << "n=" << r.n << " seed=" << r.seed << (r.ok ? " ok" : " FAILED: " + r.error)
                    << '\n';
        };
      }
      const auto report = run_convergence(c, progress);
      write_report(report, c.output_dir);
      for (const auto& s : report.slopes)
        if (s.defined) say(g, "slope " + s.column + " = " + num(s.slope) + " (residual " + num(s.residual) + ")");
      say(g, "wrote report.csv, report.json, timings.csv, plotdata/ to " + c.output_dir);
      for (const auto& r : report.rows)
        if (r.seeds_ok == 0) return 2;
    } else if (*rates_cmd) {
      if (report_path.empty()) report_path = (fs::path(c.output_dir) / "report.json").string();
      const auto report = report_from_json(read_json_file(report_path));
      const auto v = check_rates(report, report.continuum_eigenvalues);
      for (std::size_t i = 0; i < v.fitted_c.size(); ++i)
        say(g, "C over " + std::to_string(i + 1) + " smallest n: " + num(v.fitted_c[i]));
      std::cout << "C=" << num(v.c) << " stability_ratio=" << num(v.stability_ratio) << " verdict="
                << (v.pass() ? "pass" : "fail") << '\n';
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
