#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "mfrc/numerics.hpp"

namespace mfrc {

enum class ModelErrorKind {
  dimension_mismatch,
  not_symmetric,
  not_positive_semidefinite,
  not_positive_definite,
  bad_horizon,
  parse_error,
  schema_violation,
};

class ModelError : public std::runtime_error {
 public:
  ModelError(ModelErrorKind kind, std::string field, const std::string& what)
      : std::runtime_error(what), kind_(kind), field_(std::move(field)) {}
  ModelErrorKind kind() const { return kind_; }
  const std::string& field() const { return field_; }

 private:
  ModelErrorKind kind_;
  std::string field_;
};

enum class HorizonKind { finite, infinite };

struct Horizon {
  HorizonKind kind = HorizonKind::finite;
  double T = 1.0;
  double rho = 0.0;

  static Horizon finite(double T) { return {HorizonKind::finite, T, 0.0}; }
  static Horizon infinite(double rho) { return {HorizonKind::infinite, 0.0, rho}; }
  bool is_finite() const { return kind == HorizonKind::finite; }
};

struct ModelParams {
  Index n = 0, r = 0, d = 0;
  MatrixXd A, B, G, sigma;
  MatrixXd Q, R1, R2, H, Gamma;
  VectorXd eta;
  Horizon horizon;
  VectorXd xbar0;
  double init_spread = 0.0;
};

constexpr double kSymmetryTol = 1e-12;
constexpr double kDefiniteMargin = 1e-10;

/// Parameters that passed validate_params; immutable afterwards.
class ValidatedModel {
 public:
  const ModelParams& params() const { return p_; }
  const ModelParams* operator->() const { return &p_; }
  Index n() const { return p_.n; }
  Index r() const { return p_.r; }
  const MatrixXd& R1inv() const { return R1inv_; }
  const MatrixXd& R2inv() const { return R2inv_; }
  // B R1^-1 B^T
  const MatrixXd& BRB() const { return BRB_; }

 private:
  friend ValidatedModel validate_params(const ModelParams&);
  ModelParams p_;
  MatrixXd R1inv_, R2inv_, BRB_;
};

ValidatedModel validate_params(const ModelParams& raw);

struct DerivedWeights {
  MatrixXd Psi;      // Q Gamma + Gamma^T Q - Gamma^T Q Gamma
  VectorXd eta_bar;  // (I - Gamma)^T Q eta
  MatrixXd QIG;      // (I - Gamma)^T Q (I - Gamma)
};

DerivedWeights derived_weights(const ValidatedModel& m);

ModelParams parse_scenario(const std::string& json_text);
ModelParams load_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const ModelParams& p);

}  // namespace mfrc
