#ifndef TRITSMC_IO_HPP
#define TRITSMC_IO_HPP

#include "tritsmc/fk_model.hpp"
#include "tritsmc/twist.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace tritsmc::io {

using json = nlohmann::json;

// Model documents:
//   { "horizon": T, "state_sizes": [S_0..S_T], "space": "log" | "linear",
//     "initial_log_probs": [...], "transition_log_probs": [M_1..M_T],
//     "potential_log": [[...] x (T+1)], "alpha": a }
// Matrices are row-major, either nested rows or a flat list. In log space
// -inf is written as the string "-inf". With "space": "linear" every table
// holds plain probabilities / potentials and is converted on load.
//
// Twist documents:
//   { "kind": "tabular", "log_psi": [[...] x (T+1)] }
//   { "kind": "log_linear", "theta": [[...]], "features": [Phi_0..Phi_T] }
// Numbers are emitted in shortest round-trip form, so reloads are bit-exact.

FkModel model_from_json(const json& doc);
json model_to_json(const FkModel& model);

TwistFunction twist_from_json(const json& doc);
json twist_to_json(const TwistFunction& twist);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

FkModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const FkModel& model);
TwistFunction load_twist(const std::filesystem::path& path);
void save_twist(const std::filesystem::path& path, const TwistFunction& twist);

/// Scalar that may be a number or one of "-inf", "inf", "nan".
double number_from_json(const json& v);
json number_to_json(double x);
VectorXd vector_from_json(const json& v);
json vector_to_json(const VectorXd& v);
/// Nested rows, or a flat row-major list when rows/cols are given.
MatrixXd matrix_from_json(const json& v, Index rows = -1, Index cols = -1);
json matrix_to_json(const MatrixXd& m);

}  // namespace tritsmc::io

#endif  // TRITSMC_IO_HPP
