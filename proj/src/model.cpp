#include "mfrc/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mfrc {

namespace {

using nlohmann::json;

[[noreturn]] void fail(ModelErrorKind kind, const std::string& field, const std::string& msg) {
  throw ModelError(kind, field, field.empty() ? msg : field + ": " + msg);
}

void require_shape(const MatrixXd& m, Index rows, Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols)
    fail(ModelErrorKind::dimension_mismatch, name,
         "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
             std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  if (!m.allFinite()) fail(ModelErrorKind::schema_violation, name, "entries must be finite");
}

void require_symmetric(const MatrixXd& m, const std::string& name) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale)
    fail(ModelErrorKind::not_symmetric, name, "matrix is not symmetric");
}

double min_eigenvalue(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void require_psd(const MatrixXd& m, const std::string& name) {
  require_symmetric(m, name);
  if (m.size() > 0 && min_eigenvalue(m) < -kDefiniteMargin)
    fail(ModelErrorKind::not_positive_semidefinite, name, "matrix is not positive semidefinite");
}

void require_pd(const MatrixXd& m, const std::string& name) {
  require_symmetric(m, name);
  if (min_eigenvalue(m) <= kDefiniteMargin)
    fail(ModelErrorKind::not_positive_definite, name, "matrix is not positive definite");
}

MatrixXd read_matrix(const json& j, const std::string& name) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array()) fail(ModelErrorKind::schema_violation, name, "expected a nested array");
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return MatrixXd(0, 0);
  if (!j[0].is_array()) fail(ModelErrorKind::schema_violation, name, "expected a nested array");
  const Index cols = static_cast<Index>(j[0].size());
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      fail(ModelErrorKind::dimension_mismatch, name, "ragged rows");
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) fail(ModelErrorKind::schema_violation, name, "entries must be numbers");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

VectorXd read_vector(const json& j, const std::string& name) {
  if (j.is_number()) return VectorXd::Constant(1, j.get<double>());
  if (!j.is_array()) fail(ModelErrorKind::schema_violation, name, "expected an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    // accept [[a],[b]] column form as well as [a, b]
    const json& e = j[i].is_array() && j[i].size() == 1 ? j[i][0] : j[i];
    if (!e.is_number()) fail(ModelErrorKind::schema_violation, name, "entries must be numbers");
    v(static_cast<Index>(i)) = e.get<double>();
  }
  return v;
}

json write_matrix(const MatrixXd& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(row);
  }
  return out;
}

json write_vector(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Index read_dim(const json& j, const char* key) {
  if (!j.contains(key)) fail(ModelErrorKind::schema_violation, key, "missing required field");
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1)
    fail(ModelErrorKind::schema_violation, key, "must be a positive integer");
  return static_cast<Index>(v.get<long long>());
}

ModelParams parse_object(const json& j) {
  if (!j.is_object()) fail(ModelErrorKind::schema_violation, "", "scenario must be a JSON object");

  static const char* known[] = {"n",  "r",  "d", "A",     "B",   "G",       "sigma",  "Q",
                                "R1", "R2", "H", "Gamma", "eta", "horizon", "xbar0", "init_spread"};
  for (const auto& item : j.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return item.key() == k; }) == std::end(known))
      fail(ModelErrorKind::schema_violation, item.key(), "unknown field");
  }

  ModelParams p;
  p.n = read_dim(j, "n");
  p.r = read_dim(j, "r");
  p.d = j.contains("d") ? read_dim(j, "d") : p.n;
  const Index n = p.n;

  auto matrix = [&](const char* key, MatrixXd fallback, bool required) {
    if (!j.contains(key)) {
      if (required) fail(ModelErrorKind::schema_violation, key, "missing required field");
      return fallback;
    }
    return read_matrix(j.at(key), key);
  };
  auto vector = [&](const char* key) {
    return j.contains(key) ? read_vector(j.at(key), key) : VectorXd(VectorXd::Zero(n));
  };

  p.A = matrix("A", {}, true);
  p.B = matrix("B", {}, true);
  p.G = matrix("G", MatrixXd::Zero(n, n), false);
  p.sigma = matrix("sigma", 0.1 * MatrixXd::Identity(n, p.d), false);
  p.Q = matrix("Q", {}, true);
  p.R1 = matrix("R1", {}, true);
  p.R2 = matrix("R2", {}, true);
  p.H = matrix("H", MatrixXd::Zero(n, n), false);
  p.Gamma = matrix("Gamma", MatrixXd::Zero(n, n), false);
  p.eta = vector("eta");
  p.xbar0 = vector("xbar0");
  if (j.contains("init_spread")) {
    if (!j.at("init_spread").is_number())
      fail(ModelErrorKind::schema_violation, "init_spread", "must be a number");
    p.init_spread = j.at("init_spread").get<double>();
  }

  if (!j.contains("horizon") || !j.at("horizon").is_object())
    fail(ModelErrorKind::schema_violation, "horizon", "missing horizon object");
  const json& hz = j.at("horizon");
  const std::string type = hz.value("type", "");
  if (type == "finite") {
    if (!hz.contains("T") || !hz.at("T").is_number()) fail(ModelErrorKind::bad_horizon, "horizon", "finite horizon needs T");
    p.horizon = Horizon::finite(hz.at("T").get<double>());
  } else if (type == "infinite") {
    const double rho = hz.contains("rho") ? hz.at("rho").get<double>() : 0.0;
    p.horizon = Horizon::infinite(rho);
  } else {
    fail(ModelErrorKind::bad_horizon, "horizon", "type must be \"finite\" or \"infinite\"");
  }
  return p;
}

}  // namespace

ValidatedModel validate_params(const ModelParams& raw) {
  const Index n = raw.n, r = raw.r, d = raw.d;
  if (n < 1 || r < 1 || d < 1)
    fail(ModelErrorKind::dimension_mismatch, "n/r/d", "dimensions must be positive");
  require_shape(raw.A, n, n, "A");
  require_shape(raw.B, n, r, "B");
  require_shape(raw.G, n, n, "G");
  require_shape(raw.sigma, n, d, "sigma");
  require_shape(raw.Q, n, n, "Q");
  require_shape(raw.R1, r, r, "R1");
  require_shape(raw.R2, n, n, "R2");
  require_shape(raw.H, n, n, "H");
  require_shape(raw.Gamma, n, n, "Gamma");
  require_shape(raw.eta, n, 1, "eta");
  require_shape(raw.xbar0, n, 1, "xbar0");

  require_psd(raw.Q, "Q");
  require_psd(raw.H, "H");
  require_pd(raw.R1, "R1");
  require_pd(raw.R2, "R2");

  const Horizon& hz = raw.horizon;
  if (hz.is_finite()) {
    if (!(hz.T > 0) || !std::isfinite(hz.T)) fail(ModelErrorKind::bad_horizon, "horizon", "T must be positive");
  } else if (!(hz.rho >= 0) || !std::isfinite(hz.rho)) {
    fail(ModelErrorKind::bad_horizon, "horizon", "rho must be non-negative");
  }
  if (!(raw.init_spread >= 0) || !std::isfinite(raw.init_spread))
    fail(ModelErrorKind::schema_violation, "init_spread", "must be non-negative");

  ValidatedModel m;
  m.p_ = raw;
  m.p_.Q = 0.5 * (raw.Q + raw.Q.transpose());
  m.p_.H = 0.5 * (raw.H + raw.H.transpose());
  m.p_.R1 = 0.5 * (raw.R1 + raw.R1.transpose());
  m.p_.R2 = 0.5 * (raw.R2 + raw.R2.transpose());
  m.R1inv_ = m.p_.R1.llt().solve(MatrixXd::Identity(r, r));
  m.R2inv_ = m.p_.R2.llt().solve(MatrixXd::Identity(n, n));
  m.R1inv_ = 0.5 * (m.R1inv_ + m.R1inv_.transpose());
  m.R2inv_ = 0.5 * (m.R2inv_ + m.R2inv_.transpose());
  m.BRB_ = raw.B * m.R1inv_ * raw.B.transpose();
  m.BRB_ = 0.5 * (m.BRB_ + m.BRB_.transpose());
  return m;
}

DerivedWeights derived_weights(const ValidatedModel& m) {
  const ModelParams& p = m.params();
  const MatrixXd I = MatrixXd::Identity(p.n, p.n);
  const MatrixXd IG = I - p.Gamma;
  DerivedWeights w;
  w.Psi = p.Q * p.Gamma + p.Gamma.transpose() * p.Q - p.Gamma.transpose() * p.Q * p.Gamma;
  w.eta_bar = IG.transpose() * p.Q * p.eta;
  w.QIG = IG.transpose() * p.Q * IG;
  w.Psi = 0.5 * (w.Psi + w.Psi.transpose());
  w.QIG = 0.5 * (w.QIG + w.QIG.transpose());
  return w;
}

ModelParams parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ModelErrorKind::parse_error, "", std::string("scenario is not valid JSON: ") + e.what());
  }
  try {
    return parse_object(j);
  } catch (const json::exception& e) {
    fail(ModelErrorKind::schema_violation, "", std::string("unexpected value type: ") + e.what());
  }
}


ModelParams load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ModelErrorKind::parse_error, "", "cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string serialize_scenario(const ModelParams& p) {
  json j;
  j["n"] = p.n;
  j["r"] = p.r;
  j["d"] = p.d;
  j["A"] = write_matrix(p.A);
  j["B"] = write_matrix(p.B);
  j["G"] = write_matrix(p.G);
  j["sigma"] = write_matrix(p.sigma);
  j["Q"] = write_matrix(p.Q);
  j["R1"] = write_matrix(p.R1);
  j["R2"] = write_matrix(p.R2);
  j["H"] = write_matrix(p.H);
  j["Gamma"] = write_matrix(p.Gamma);
  j["eta"] = write_vector(p.eta);
  j["xbar0"] = write_vector(p.xbar0);
  j["init_spread"] = p.init_spread;
  if (p.horizon.is_finite())
    j["horizon"] = {{"type", "finite"}, {"T", p.horizon.T}};
  else
    j["horizon"] = {{"type", "infinite"}, {"rho", p.horizon.rho}};
  return j.dump(2);
}

}  // namespace mfrc
