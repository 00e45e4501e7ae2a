#include <doctest.h>

#include "mfrc/acceptance.hpp"
#include "mfrc/model.hpp"

using namespace mfrc;

namespace {

const std::string kDir = MFRC_SCENARIO_DIR;

std::string minimal(const std::string& extra) {
  return R"({"n":1,"r":1,"A":[[1]],"B":[[1]],"Q":[[1]],"R1":[[1]],"R2":[[1]],)"
         R"("horizon":{"type":"finite","T":1})" +
         extra + "}";
}

ModelErrorKind kind_of(const ModelParams& p) {
  try {
    validate_params(p);
  } catch (const ModelError& e) {
    return e.kind();
  }
  FAIL("expected a ModelError");
  return ModelErrorKind::parse_error;
}

}  // namespace

TEST_CASE("shipped scenario equals the built-in reference") {
  const ModelParams file = load_scenario(kDir + "/paper_example.json");
  const ModelParams ref = reference_example_params();
  CHECK(serialize_scenario(file) == serialize_scenario(ref));
  CHECK(serialize_scenario(load_scenario(kDir + "/blowup_case.json")) == serialize_scenario(blowup_case_params()));
  CHECK(serialize_scenario(load_scenario(kDir + "/scalar_infinite.json")) ==
        serialize_scenario(scalar_infinite_params()));
  CHECK(serialize_scenario(load_scenario(kDir + "/homogeneous.json")) == serialize_scenario(homogeneous_params()));
}

TEST_CASE("defaults for optional keys") {
  const ModelParams p = parse_scenario(minimal(""));
  CHECK(p.d == 1);
  CHECK(p.G(0, 0) == 0.0);
  CHECK(p.sigma(0, 0) == doctest::Approx(0.1));
  CHECK(p.H(0, 0) == 0.0);
  CHECK(p.eta(0) == 0.0);
  CHECK(p.init_spread == 0.0);
}

TEST_CASE("serialization round-trips") {
  const ModelParams p = reference_example_params();
  const ModelParams q = parse_scenario(serialize_scenario(p));
  CHECK(serialize_scenario(q) == serialize_scenario(p));
  CHECK(q.horizon.T == 1.0);
}

TEST_CASE("parse and schema failures") {
  try {
    parse_scenario("{ not json");
    FAIL("expected throw");
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelErrorKind::parse_error);
  }
  try {
    parse_scenario(minimal(R"(,"bogus":1)"));
    FAIL("expected throw");
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelErrorKind::schema_violation);
  }
  try {
    parse_scenario(R"({"n":1,"r":1})");
    FAIL("expected throw");
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelErrorKind::schema_violation);
  }
  try {
    parse_scenario(minimal("").replace(minimal("").find("finite"), 6, "sometimes"));
    FAIL("expected throw");
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelErrorKind::bad_horizon);
  }
}

TEST_CASE("validation rejects bad weights and shapes") {
  ModelParams p = reference_example_params();
  p.R2(0, 0) = 0.0;
  CHECK(kind_of(p) == ModelErrorKind::not_positive_definite);

  p = reference_example_params();
  p.Q(0, 0) = -1.0;
  CHECK(kind_of(p) == ModelErrorKind::not_positive_semidefinite);

  p = reference_example_params();
  p.A = MatrixXd::Identity(2, 2);
  CHECK(kind_of(p) == ModelErrorKind::dimension_mismatch);

  p = reference_example_params();
  p.n = p.d = 2;
  p.A = p.G = p.sigma = p.H = p.Gamma = MatrixXd::Zero(2, 2);
  p.B = MatrixXd::Ones(2, 1);
  p.Q = p.R2 = MatrixXd::Identity(2, 2);
  p.Q(0, 1) = 0.5;
  p.eta = p.xbar0 = VectorXd::Zero(2);
  CHECK(kind_of(p) == ModelErrorKind::not_symmetric);

  p = reference_example_params();
  p.horizon = Horizon::finite(-1.0);
  CHECK(kind_of(p) == ModelErrorKind::bad_horizon);
}

TEST_CASE("derived weights of the reference example") {
  const ValidatedModel m = validate_params(reference_example_params());
  const DerivedWeights w = derived_weights(m);
  CHECK(w.Psi(0, 0) == doctest::Approx(0.75));
  CHECK(w.QIG(0, 0) == doctest::Approx(0.25));
  CHECK(w.eta_bar(0) == 0.0);
  CHECK(m.BRB()(0, 0) == 1.0);
}
