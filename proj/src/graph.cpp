#include "gbip/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "gbip/errors.hpp"
#include "gbip/kernels.hpp"
#include "gbip/transport.hpp"

namespace gbip {

double unit_ball_volume(int m) {
  if (m < 1) throw ValidationError("unit_ball_volume: dimension must be >= 1");
  return std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m + 1.0);
}

KernelSpec KernelSpec::indicator(double epsilon, int intrinsic_dim) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ValidationError("graph: epsilon must be a positive finite number");
  }
  KernelSpec k;
  k.epsilon = epsilon;
  k.intrinsic_dim = intrinsic_dim;
  k.sigma_k = unit_ball_volume(intrinsic_dim) / (intrinsic_dim + 2);
  return k;
}

double KernelSpec::weight(std::size_t n) const {
  const double nn = static_cast<double>(n);
  return 1.0 / (sigma_k * nn * nn * std::pow(epsilon, intrinsic_dim + 2));
}

namespace {

struct DisjointSets {
  std::vector<std::uint32_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0u);
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

GeometricGraph build_graph(const PointCloud& cloud, double epsilon) {
  const std::size_t n = cloud.size();
  if (n == 0) throw ValidationError("graph: empty point cloud");
  GeometricGraph g{cloud, KernelSpec::indicator(epsilon, cloud.manifold().intrinsic_dim()),
                   {}, {}, 0, {}, {}};
  const double w = g.kernel.weight(n);
  const double r2 = epsilon * epsilon;

  std::vector<const double*> cols;
  for (const auto& c : cloud.columns()) cols.push_back(c.data());

  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<std::uint32_t> hits;
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    hits.clear();
    kernels::neighbors_within(cols, i, n, cloud.point(i), r2, hits);
    for (const std::uint32_t j : hits) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), w);
      if (j != i) {
        triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), w);
        sets.unite(static_cast<std::uint32_t>(i), j);
      }
    }
  }
  g.weights.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  g.weights.setFromTriplets(triplets.begin(), triplets.end());
  g.weights.makeCompressed();

  g.degree = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < g.weights.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(g.weights, c); it; ++it)
      g.degree(it.row()) += it.value();

  std::vector<int> label_of_root(n, -1);
  g.component.resize(n);
  std::size_t isolated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = sets.find(static_cast<std::uint32_t>(i));
    if (label_of_root[root] < 0) label_of_root[root] = static_cast<int>(g.component_count++);
    g.component[i] = label_of_root[root];
    if (g.degree(static_cast<Eigen::Index>(i)) <= w * 1.5) ++isolated;
  }
  if (g.component_count > 1) {
    std::ostringstream msg;
    msg << "graph has " << g.component_count << " connected components (" << isolated
        << " isolated points) at epsilon=" << epsilon << "; increase epsilon";
    g.warnings.push_back({"disconnected", msg.str()});
  }
  return g;
}

GraphLaplacian graph_laplacian(const GeometricGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.cloud.size());
  Eigen::SparseMatrix<double> d(n, n);
  d.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) d.insert(i, i) = graph.degree(i);
  GraphLaplacian out;
  out.matrix = d - graph.weights;
  out.matrix.makeCompressed();
  out.spectral_scale = 2.0 * static_cast<double>(n) * graph.cloud.manifold().volume();
  out.component_count = graph.component_count;
  return out;
}

GraphSpectrum graph_spectrum(const GraphLaplacian& laplacian, std::size_t k,
                             const EigenSolverOptions& options) {
  const auto n = static_cast<std::size_t>(laplacian.matrix.rows());
  if (k < 1 || k > n) {
    std::ostringstream msg;
    msg << "graph spectrum: k=" << k << " must lie in [1, n=" << n << "]";
    throw ValidationError(msg.str());
  }
  const auto pairs = smallest_eigenpairs(laplacian.normalized(), k, options);
  GraphSpectrum out;
  out.eigenvalues = pairs.values;
  out.max_residual = pairs.max_residual;
  if (options.values_only) return out;
  out.vectors = pairs.vectors * std::sqrt(static_cast<double>(n));
  for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    out.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, c) < 0.0) out.vectors.col(c) *= -1.0;
  }
  return out;
}

GraphSpectrum align_spectrum(const GraphSpectrum& graph_spec, const ContinuumSpectrum& cont_spec,
                             const TransportMap& map) {
  return align_spectrum(graph_spec, cont_spec, map, std::min(graph_spec.size(), cont_spec.size()));
}

std::vector<RotationBlock> alignment_rotation(const GraphSpectrum& graph_spec,
                                              const ContinuumSpectrum& cont_spec,
                                              const TransportMap& map, std::size_t k_align) {
  if (k_align > graph_spec.size() || k_align > cont_spec.size()) {
    throw ValidationError("align: k_align exceeds the available modes");
  }
  if (map.target_count() != graph_spec.points()) {
    throw ValidationError("align: transport map targets a different cloud size");
  }
  const auto clusters = cont_spec.clusters(k_align);
  if (!clusters.empty() && cont_spec.complete_cluster_prefix(k_align) != k_align) {
    const auto [b, e] = clusters.back();
    std::ostringstream msg;
    msg << "align: eigenvalue cluster of lambda=" << cont_spec.eigenvalue(b) << " (modes " << b + 1
        << ".." << e << " and beyond) is split by the truncation at k=" << k_align;
    throw ValidationError(msg.str());
  }

  const auto& src = map.source();
  const std::size_t ns = src.size();
  const auto psi = cont_spec.evaluate(src.charts, k_align);  // ns x k_align, row-major
  std::vector<RotationBlock> out;
  for (const auto& [b, e] : clusters) {
    const auto d = static_cast<Eigen::Index>(e - b);
    if (d == 1) {
      // Rotation group is {+1, -1}: pick the sign that matches psi.
      double corr = 0.0;
      for (std::size_t s = 0; s < ns; ++s) {
        corr += src.weights[s] * graph_spec.vectors(map.target()[s], static_cast<Eigen::Index>(b)) *
                psi[s * k_align + b];
      }
      out.push_back({b, Eigen::MatrixXd::Constant(1, 1, corr < 0.0 ? -1.0 : 1.0)});
      continue;
    }
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, d);  // graph x continuum
    for (std::size_t s = 0; s < ns; ++s) {
      const auto t = static_cast<Eigen::Index>(map.target()[s]);
      for (Eigen::Index a = 0; a < d; ++a) {
        const double va = src.weights[s] * graph_spec.vectors(t, static_cast<Eigen::Index>(b) + a);
        for (Eigen::Index c = 0; c < d; ++c) cross(a, c) += va * psi[s * k_align + b + c];
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.push_back({b, svd.matrixU() * svd.matrixV().transpose()});
  }
  return out;
}

GraphSpectrum apply_rotation(const GraphSpectrum& graph_spec,
                             const std::vector<RotationBlock>& blocks) {
  GraphSpectrum out = graph_spec;
  for (const auto& blk : blocks) {
    const auto b = static_cast<Eigen::Index>(blk.begin);
    const auto d = blk.q.rows();
    if (b + d > out.vectors.cols()) throw ValidationError("rotation block exceeds the spectrum");
    out.vectors.middleCols(b, d) = graph_spec.vectors.middleCols(b, d) * blk.q;
  }
  return out;
}

GraphSpectrum align_spectrum(const GraphSpectrum& graph_spec, const ContinuumSpectrum& cont_spec,
                             const TransportMap& map, std::size_t k_align) {
  return apply_rotation(graph_spec, alignment_rotation(graph_spec, cont_spec, map, k_align));
}

void write_triplets(const GeometricGraph& graph, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open '" + path + "' for writing");
  os.precision(17);
  for (Eigen::Index c = 0; c < graph.weights.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(graph.weights, c); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace gbip
