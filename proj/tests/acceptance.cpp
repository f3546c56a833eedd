// Acceptance run: one [PASS]/[FAIL] line per criterion. Optional arguments
// select criteria by number; --seed overrides the default seed.
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "ddfire/verify.hpp"

int main(int argc, char** argv) {
  std::uint64_t seed = ddfire::verify::kDefaultSeed;
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--seed" && i + 1 < argc) {
      seed = std::stoull(argv[++i]);
    } else {
      which.push_back(std::stoi(arg));
    }
  }
  int failed = 0;
  ddfire::verify::run_acceptance(seed, which, [&](const ddfire::verify::CheckResult& r) {
    std::cout << ddfire::verify::format_result(r) << std::endl;
    failed += r.passed ? 0 : 1;
  });
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
