#pragma once

// JSON (and raw binary) serialization of clouds, spectra, measures, TL2
// points and posterior summaries.

#include <Eigen/Dense>

#include <string>

#include "json.hpp"

#include "gbip/graph.hpp"
#include "gbip/inversion.hpp"
#include "gbip/manifold.hpp"
#include "gbip/spectral_measures.hpp"
#include "gbip/transport.hpp"

namespace gbip {

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

/// {manifold, n, seed, points: [[x...], ...]}
nlohmann::json to_json(const PointCloud& cloud);
/// Throws DomainError if a point is off the manifold.
PointCloud cloud_from_json(const nlohmann::json& j);

/// Eigenvalues and residual; vectors go to `vectors_path` (little-endian
/// doubles, column-major n x k) when it is non-empty.
nlohmann::json to_json(const GraphSpectrum& spectrum, const std::string& vectors_path = {});

nlohmann::json to_json(const DiagonalGaussianMeasure& measure);
DiagonalGaussianMeasure measure_from_json(const nlohmann::json& j);

/// {manifold, atoms: [[x...]], weights, values}
nlohmann::json to_json(const TL2Point& point);
TL2Point tl2point_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DataVector& data);
nlohmann::json to_json(const PosteriorGaussian& posterior);

nlohmann::json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace gbip
