#include "gbip/io.hpp"

#include <cmath>
#include <fstream>

#include "gbip/errors.hpp"

namespace gbip {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write '" + path + "'");
  os << j.dump(2) << '\n';
}

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

namespace {

json atoms(const std::vector<double>& coords, std::size_t d) {
  json pts = json::array();
  for (std::size_t i = 0; i + d <= coords.size(); i += d)
    pts.push_back(std::vector<double>(coords.begin() + static_cast<std::ptrdiff_t>(i),
                                      coords.begin() + static_cast<std::ptrdiff_t>(i + d)));
  return pts;
}

std::vector<double> flatten(const json& pts, std::size_t d) {
  std::vector<double> out;
  for (const auto& p : pts) {
    const auto x = p.get<std::vector<double>>();
    if (x.size() != d) throw ValidationError("point has the wrong ambient dimension");
    out.insert(out.end(), x.begin(), x.end());
  }
  return out;
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

}  // namespace

json to_json(const PointCloud& cloud) {
  return {{"manifold", to_string(cloud.manifold().kind())},
          {"n", cloud.size()},
          {"seed", cloud.seed()},
          {"points", atoms(cloud.coords(), cloud.ambient_dim())}};
}

PointCloud cloud_from_json(const json& j) {
  return guarded("cloud", [&] {
    const Manifold m = Manifold::of_kind(manifold_kind_from_string(j.at("manifold").get<std::string>()));
    PointCloud cloud(m, j.value("seed", std::uint64_t{0}), flatten(j.at("points"), m.ambient_dim()));
    if (j.contains("n") && j.at("n").get<std::size_t>() != cloud.size())
      throw ValidationError("cloud: n does not match the number of points");
    return cloud;
  });
}

json to_json(const GraphSpectrum& spectrum, const std::string& vectors_path) {
  json j = {{"k", spectrum.size()},
            {"n", spectrum.points()},
            {"eigenvalues", to_json(spectrum.eigenvalues)},
            {"max_residual", spectrum.max_residual}};
  if (!vectors_path.empty() && spectrum.vectors.size() > 0) {
    std::ofstream os(vectors_path, std::ios::binary);
    if (!os) throw ValidationError("cannot write '" + vectors_path + "'");
    os.write(reinterpret_cast<const char*>(spectrum.vectors.data()),
             static_cast<std::streamsize>(spectrum.vectors.size() * sizeof(double)));
    j["vectors"] = {{"path", vectors_path},
                    {"layout", "column-major float64 little-endian"},
                    {"rows", spectrum.vectors.rows()},
                    {"cols", spectrum.vectors.cols()},
                    {"normalization", "(1/n) sum_k v_i(x_k) v_j(x_k) = delta_ij"}};
  }
  return j;
}

json to_json(const DiagonalGaussianMeasure& measure) {
  return {{"basis_ref", measure.basis_ref()},
          {"truncation", measure.truncation()},
          {"means", to_json(measure.means())},
          {"stds", to_json(measure.stds())},
          {"tail_bound", measure.tail_bound()}};
}

DiagonalGaussianMeasure measure_from_json(const json& j) {
  return guarded("measure", [&] {
    return DiagonalGaussianMeasure(j.at("basis_ref").get<std::string>(),
                                   vector_from_json(j.at("means")), vector_from_json(j.at("stds")),
                                   j.value("tail_bound", 0.0));
  });
}

json to_json(const TL2Point& point) {
  return {{"manifold", to_string(point.manifold.kind())},
          {"atoms", atoms(point.coords, point.manifold.ambient_dim())},
          {"weights", point.weights},
          {"values", point.values}};
}

TL2Point tl2point_from_json(const json& j) {
  return guarded("TL2 point", [&] {
    TL2Point p;
    p.manifold = Manifold::of_kind(manifold_kind_from_string(j.at("manifold").get<std::string>()));
    p.coords = flatten(j.at("atoms"), p.manifold.ambient_dim());
    p.weights = j.at("weights").get<std::vector<double>>();
    p.values = j.at("values").get<std::vector<double>>();
    if (p.weights.size() * p.manifold.ambient_dim() != p.coords.size() ||
        p.values.size() != p.weights.size()) {
      throw ValidationError("TL2 point: atoms, weights and values differ in length");
    }
    double total = 0.0;
    for (double w : p.weights) {
      if (!(w >= 0.0)) throw ValidationError("TL2 point: negative weight");
      total += w;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("TL2 point: weights must sum to 1");
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!p.manifold.contains(p.atom(i)))
        throw DomainError("TL2 point: atom " + std::to_string(i) + " is off the manifold");
    return p;
  });
}

json to_json(const DataVector& data) {
  json j = {{"y", to_json(data.y)}, {"provenance", data.provenance}};
  if (data.provenance == "synthetic") {
    j["noise_seed"] = data.noise_seed;
    j["truth"] = {{"basis_ref", data.truth_basis},
                  {"coefficients", to_json(data.truth_coefficients)}};
  }
  return j;
}

json to_json(const PosteriorGaussian& posterior) {
  const Eigen::VectorXd var = posterior.covariance.diagonal();
  return {{"basis_ref", posterior.basis_ref},
          {"k", posterior.size()},
          {"mean", to_json(posterior.mean)},
          {"stds", to_json(var.cwiseMax(0.0).cwiseSqrt().eval())}};
}

}  // namespace gbip
