#include <iostream>

#include "mfrc/acceptance.hpp"

int main() {
  int failed = 0;
  for (int id = 1; id <= mfrc::kCriteriaCount; ++id) {
    const mfrc::CriterionResult r = mfrc::run_criterion(id);
    std::cout << mfrc::format_result(r) << " [" << r.seconds << " s]" << std::endl;
    if (!r.passed) ++failed;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << (mfrc::kCriteriaCount - failed) << "/"
            << mfrc::kCriteriaCount << std::endl;
  return failed ? 1 : 0;
}
