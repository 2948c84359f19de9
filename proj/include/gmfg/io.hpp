#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

// Single-header nlohmann/json, vendored as json.hpp.
#include <json.hpp>

#include "gmfg/graphon.hpp"
#include "gmfg/ode.hpp"

namespace gmfg {

using json = nlohmann::json;

// ----------------------------------------------------------------- graphons
// JSON forms:
//   {"type": "step", "matrix": [[...], ...], "c": 1.0}
//   {"type": "analytic", "name": "uniform_attachment"}
//   {"type": "spectral", "pairs": [{"lambda": l, "basis": "cos"|"step",
//                                   "coeffs": [...]}, ...], "c": 1.0}
json graphon_to_json(const Graphon& g);
Graphon graphon_from_json(const json& j);

// --------------------------------------------------------------------- paths
// CSV layout: header "t,<name>0,<name>1,..."; one row per grid node, first
// column the node time, then the entries (row-major for matrices).
void write_vector_path_csv(const std::string& file, const VectorPath& path,
                           const std::string& name = "x");
void write_matrix_path_csv(const std::string& file, const MatrixPath& path,
                           const std::string& name = "m");
VectorPath read_vector_path_csv(const std::string& file);

// --------------------------------------------------------------------- graphs
// Edge list CSV with header "i,j,weight" (0-based, upper triangle) plus a JSON
// sidecar {"seed": ..., "latents": [...]} next to it.
void write_graph_csv(const std::string& file, const SampledGraph& g);
SampledGraph read_graph_csv(const std::string& file);

// --------------------------------------------------------------------- misc
Eigen::MatrixXd matrix_from_json(const json& j);
Eigen::VectorXd vector_from_json(const json& j);
json matrix_to_json(const Eigen::MatrixXd& m);
json vector_to_json(const Eigen::VectorXd& v);

json read_json_file(const std::string& file);
void write_json_file(const std::string& file, const json& j);

// Apply a dotted-path override ("solver.rank=3"); the value is parsed as JSON
// if possible, else taken as a string.
void apply_override(json& config, const std::string& assignment);

} // namespace gmfg
