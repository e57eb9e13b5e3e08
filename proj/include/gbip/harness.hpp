#pragma once

// Convergence sweeps over a grid of cloud sizes, rate checks and report output.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gbip/inversion.hpp"
#include "gbip/manifold.hpp"

namespace gbip {

inline constexpr int kReportSchemaVersion = 1;

/// Connectivity-radius schedule.
///   lower(n) = L (log n)^(p_m) / n^(1/m),   upper(n) = L n^(-1/s)
///   auto_geomean: eps(n) = sqrt(lower(n) upper(n))
/// L is a length scale: the manifold's vol^(1/m) unless overridden (L = 1
/// gives the bare rates).
struct EpsilonRule {
  enum class Kind { auto_geomean, explicit_list };
  Kind kind = Kind::auto_geomean;
  std::vector<double> values;          // explicit_list: one per n_grid entry
  std::optional<double> length_scale;  // unset: manifold length scale
};

/// p_m: 1 for m = 1 (extrapolated), 3/4 for m = 2, 1/m for m >= 3.
double log_exponent(int m);

struct EpsilonBounds {
  double lower = 0.0;
  double upper = 0.0;
};

EpsilonBounds epsilon_bounds(std::size_t n, int m, double s, double length_scale = 1.0);

/// auto_geomean value; throws ValidationError naming both bounds when the
/// window is empty (n too small for the given s, m) or n < 2.
double epsilon_auto(std::size_t n, int m, double s, double length_scale = 1.0);

struct ExperimentConfig {
  ManifoldKind manifold = ManifoldKind::circle;
  std::vector<std::size_t> n_grid = {250, 500, 1000, 2000};
  EpsilonRule epsilon;
  double alpha = 1.0;
  double s = 4.0;
  double t = 1.0;
  std::size_t p = 6;
  double delta = 0.2;
  NoiseModel noise = NoiseModel::gaussian(0.05);
  bool normalize_observation = false;
  std::size_t k_report = 9;
  double k_n_constant = 0.1;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  /// Monte Carlo measure distances use the first mc_seeds seeds; the other
  /// diagnostics use every seed.
  std::size_t mc_seeds = 3;
  std::size_t mc_pairs = 200;
  std::size_t resolution = 8192;
  double tail_target = 1e-6;
  /// Full graph spectrum (k = n) up to this size; above it the graph side is
  /// truncated to the continuum truncation.
  std::size_t full_spectrum_limit = 2000;
  /// Test function coefficients (continuum basis) for the forward and observation checks.
  std::vector<double> test_coefficients = {0.0, 1.0, 0.0, 0.5};
  std::string output_dir = "out";

  Manifold make_manifold() const { return Manifold::of_kind(manifold); }
  double length_scale() const;
  /// eps for n_grid[index].
  double epsilon_for(std::size_t index) const;
  /// Throws ValidationError on any invalid field or an empty epsilon window.
  void validate() const;
};

/// Rejects unknown keys; missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

/// Diagnostics for one (n, seed).
struct Replicate {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<std::string> warnings;
  double epsilon = 0.0;
  double t_n = 0.0;
  std::size_t component_count = 0;
  std::size_t k_n = 0;
  std::size_t graph_modes = 0;
  std::vector<double> graph_eigenvalues;  // first k_report
  std::vector<double> eig_abs_error;
  std::vector<double> eig_rel_error;  // relative; absolute for lambda = 0
  bool has_mc = false;
  double prior_tl2 = std::numeric_limits<double>::quiet_NaN();
  double prior_tl2_se = std::numeric_limits<double>::quiet_NaN();
  double forward_tl2 = std::numeric_limits<double>::quiet_NaN();
  double observation_error = std::numeric_limits<double>::quiet_NaN();
  double posterior_mean_tl2 = std::numeric_limits<double>::quiet_NaN();
  double posterior_tl2 = std::numeric_limits<double>::quiet_NaN();
  double posterior_tl2_se = std::numeric_limits<double>::quiet_NaN();
  double pushforward_tl2 = std::numeric_limits<double>::quiet_NaN();
  double pushforward_tl2_se = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
};

/// Per-n aggregate: medians over the successful replicates (Monte Carlo
/// columns over the replicates that computed them).
struct ReportRow {
  std::size_t n = 0;
  double epsilon = 0.0;
  double t_n = 0.0;
  std::size_t component_count = 0;
  std::size_t k_n = 0;
  std::size_t seeds_ok = 0;
  std::size_t seeds_failed = 0;
  std::vector<double> eig_rel_error;
  std::vector<double> eig_abs_error;
  double prior_tl2 = std::numeric_limits<double>::quiet_NaN();
  double prior_tl2_se = std::numeric_limits<double>::quiet_NaN();
  double forward_tl2 = std::numeric_limits<double>::quiet_NaN();
  double observation_error = std::numeric_limits<double>::quiet_NaN();
  double posterior_mean_tl2 = std::numeric_limits<double>::quiet_NaN();
  double posterior_tl2 = std::numeric_limits<double>::quiet_NaN();
  double posterior_tl2_se = std::numeric_limits<double>::quiet_NaN();
  double pushforward_tl2 = std::numeric_limits<double>::quiet_NaN();
  double pushforward_tl2_se = std::numeric_limits<double>::quiet_NaN();
};

struct SlopeFit {
  std::string column;
  bool defined = false;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();  // RMS in log space
  std::size_t points = 0;
};

struct ConvergenceReport {
  ExperimentConfig config;
  std::vector<double> continuum_eigenvalues;  // first k_report
  std::size_t continuum_modes = 0;
  double continuum_tail = 0.0;
  std::vector<ReportRow> rows;
  std::vector<Replicate> replicates;
  std::vector<SlopeFit> slopes;
};

/// Everything computed for one (n, seed); exposed for tests and the CLI.
Replicate run_replicate(const ExperimentConfig& config, std::size_t grid_index,
                        std::uint64_t seed, bool with_mc);

using ProgressFn = std::function<void(const Replicate&)>;

/// Runs every (n, seed), isolating failures per replicate, and aggregates.
ConvergenceReport run_convergence(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Aggregates replicates into rows and fits slopes (also used on synthetic input).
void aggregate(ConvergenceReport& report);

/// OLS of log(value) on log(n) over the largest max(3, ceil(N/2)) points
/// (all points when fewer than 3); undefined with fewer than 2 finite points.
SlopeFit fit_slope(const std::string& column, const std::vector<double>& n,
                   const std::vector<double>& values);

struct RateVerdict {
  /// C_k: smallest constant making |lambda_i - lambda_i^n| <= C (t_n/eps + sqrt(lambda_i) eps)
  /// hold over the k smallest n (all modes i <= k_report).
  std::vector<double> fitted_c;
  double c = std::numeric_limits<double>::quiet_NaN();
  double stability_ratio = std::numeric_limits<double>::quiet_NaN();
  bool finite = false;
  bool stable = false;
  bool pass() const { return finite && stable; }
};

inline constexpr double kRateStabilityLimit = 5.0;

RateVerdict check_rates(const ConvergenceReport& report,
                        const std::vector<double>& continuum_eigenvalues);

/// CSV header for the per-n report.
std::vector<std::string> report_columns(std::size_t k_report);

std::string report_csv(const ConvergenceReport& report);
nlohmann::json report_json(const ConvergenceReport& report);
ConvergenceReport report_from_json(const nlohmann::json& j);
std::string timings_csv(const ConvergenceReport& report);

/// Writes report.csv, report.json, timings.csv and plotdata/<column>.tsv.
void write_report(const ConvergenceReport& report, const std::string& dir);

}  // namespace gbip
