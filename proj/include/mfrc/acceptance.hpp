#pragma once

#include <string>
#include <vector>

#include "mfrc/model.hpp"

namespace mfrc {

// Reference scenarios, also shipped as JSON under scenarios/.
ModelParams reference_example_params();
ModelParams blowup_case_params();
ModelParams scalar_infinite_params();
ModelParams homogeneous_params();

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

constexpr int kCriteriaCount = 10;

CriterionResult run_criterion(int id);
std::vector<CriterionResult> run_acceptance();

// "PASS 3 name: detail"
std::string format_result(const CriterionResult& r);

}  // namespace mfrc
