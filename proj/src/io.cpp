#include "tritsmc/io.hpp"

#include <fstream>
#include <limits>

namespace tritsmc::io {

namespace {

const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return doc.at(key);
}

}  // namespace

double number_from_json(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ConfigError("expected a number, got " + v.dump());
}

json number_to_json(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

VectorXd vector_from_json(const json& v) {
  if (!v.is_array()) throw ConfigError("expected an array, got " + v.dump());
  VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = number_from_json(v[i]);
  return out;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number_to_json(v[i]));
  return out;
}

MatrixXd matrix_from_json(const json& v, Index rows, Index cols) {
  if (!v.is_array()) throw ConfigError("expected a matrix, got " + v.dump());
  if (!v.empty() && v.front().is_array()) {
    const auto r = static_cast<Index>(v.size());
    const auto c = static_cast<Index>(v.front().size());
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i) {
      const json& row = v[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Index>(row.size()) != c) throw ShapeError("ragged matrix rows");
      for (Index j = 0; j < c; ++j) m(i, j) = number_from_json(row[static_cast<std::size_t>(j)]);
    }
    if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols)) {
      throw ShapeError("matrix is " + std::to_string(r) + "x" + std::to_string(c) + ", expected " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
    return m;
  }
  if (rows < 0 || cols < 0) throw ShapeError("flat matrix needs known dimensions");
  if (static_cast<Index>(v.size()) != rows * cols) {
    throw ShapeError("flat matrix has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(rows * cols));
  }
  const VectorXd flat = vector_from_json(v);
  return Eigen::Map<const MatrixXd>(flat.data(), rows, cols);
}

json matrix_to_json(const MatrixXd& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) out.push_back(vector_to_json(m.row(i).transpose()));
  return out;
}

FkModel model_from_json(const json& doc) {
  const int T = require(doc, "horizon").get<int>();
  if (T < 1) throw ConfigError("model horizon must be at least 1");
  const auto sizes = require(doc, "state_sizes").get<std::vector<Index>>();
  if (sizes.size() != static_cast<std::size_t>(T + 1)) throw ShapeError("state_sizes must have horizon + 1 entries");
  const std::string space = doc.value("space", std::string("log"));
  if (space != "log" && space != "linear") throw ConfigError("space must be 'log' or 'linear'");
  const bool linear = space == "linear";
  auto to_log = [&](auto x) {
    using T_ = std::decay_t<decltype(x)>;
    return linear ? T_(x.array().log()) : x;
  };

  VectorXd initial = to_log(vector_from_json(require(doc, "initial_log_probs")));
  if (initial.size() != sizes[0]) throw ShapeError("initial_log_probs length does not match S_0");

  const json& trans = require(doc, "transition_log_probs");
  if (!trans.is_array() || trans.size() != static_cast<std::size_t>(T)) {
    throw ShapeError("transition_log_probs must hold one matrix per step");
  }
  std::vector<MatrixXd> transitions;
  for (int t = 1; t <= T; ++t) {
    transitions.push_back(to_log(matrix_from_json(trans[static_cast<std::size_t>(t - 1)],
                                                  sizes[static_cast<std::size_t>(t - 1)],
                                                  sizes[static_cast<std::size_t>(t)])));
  }

  StepVectors potentials;
  if (doc.contains("potential_log")) {
    const json& pots = doc.at("potential_log");
    if (!pots.is_array() || pots.size() != static_cast<std::size_t>(T + 1)) {
      throw ShapeError("potential_log must hold horizon + 1 vectors");
    }
    for (int t = 0; t <= T; ++t) {
      potentials.push_back(to_log(vector_from_json(pots[static_cast<std::size_t>(t)])));
      if (potentials.back().size() != sizes[static_cast<std::size_t>(t)]) {
        throw ShapeError("potential_log at step " + std::to_string(t) + " has the wrong length");
      }
    }
  } else {
    for (Index s : sizes) potentials.emplace_back(VectorXd::Zero(s));
  }
  const double alpha = doc.contains("alpha") ? number_from_json(doc.at("alpha")) : 1.0;
  return FkModel(std::move(initial), std::move(transitions), std::move(potentials), alpha);
}

json model_to_json(const FkModel& model) {
  json doc;
  doc["horizon"] = model.horizon();
  doc["state_sizes"] = model.state_sizes();
  doc["space"] = "log";
  doc["initial_log_probs"] = vector_to_json(model.initial_log_probs());
  json trans = json::array();
  for (const auto& f : model.transitions()) trans.push_back(matrix_to_json(f));
  doc["transition_log_probs"] = std::move(trans);
  json pots = json::array();
  for (const auto& g : model.potentials()) pots.push_back(vector_to_json(g));
  doc["potential_log"] = std::move(pots);
  doc["alpha"] = model.alpha();
  return doc;
}

TwistFunction twist_from_json(const json& doc) {
  const std::string kind = require(doc, "kind").get<std::string>();
  if (kind == "tabular") {
    StepVectors tables;
    for (const auto& v : require(doc, "log_psi")) tables.push_back(vector_from_json(v));
    return TwistFunction::tabular(std::move(tables));
  }
  if (kind == "log_linear") {
    StepVectors theta;
    for (const auto& v : require(doc, "theta")) theta.push_back(vector_from_json(v));
    std::vector<MatrixXd> features;
    for (const auto& m : require(doc, "features")) features.push_back(matrix_from_json(m));
    return TwistFunction::log_linear(std::move(theta), std::move(features));
  }
  throw ConfigError("unknown twist kind '" + kind + "'");
}

json twist_to_json(const TwistFunction& twist) {
  json doc;
  if (twist.kind() == TwistKind::tabular) {
    doc["kind"] = "tabular";
    json tables = json::array();
    for (const auto& v : twist.log_psi_tables()) tables.push_back(vector_to_json(v));
    doc["log_psi"] = std::move(tables);
  } else {
    doc["kind"] = "log_linear";
    json theta = json::array();
    for (const auto& v : twist.theta()) theta.push_back(vector_to_json(v));
    json feats = json::array();
    for (const auto& m : twist.features()) feats.push_back(matrix_to_json(m));
    doc["theta"] = std::move(theta);
    doc["features"] = std::move(feats);
  }
  return doc;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

FkModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }
void save_model(const std::filesystem::path& path, const FkModel& model) { write_json_file(path, model_to_json(model)); }
TwistFunction load_twist(const std::filesystem::path& path) { return twist_from_json(read_json_file(path)); }
void save_twist(const std::filesystem::path& path, const TwistFunction& twist) {
  write_json_file(path, twist_to_json(twist));
}

}  // namespace tritsmc::io
