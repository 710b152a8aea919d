#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trg/gradcheck.hpp"

namespace trg {

struct SuiteEntry {
  std::string loss;  // kd, logit, local, global, inner, total
  std::size_t cases = 0;
  double max_rel_error = 0.0;
  std::uint64_t worst_seed = 0;
  std::size_t failures = 0;
};

// Finite-difference checks of every loss on randomized tiny instances
// (S <= 16, D <= 8, K <= 5), one instance per loss per seed.
std::vector<SuiteEntry> run_gradcheck_suite(std::size_t seeds, double tolerance = 1e-4, double h = 1e-5,
                                            std::uint64_t first_seed = 1);

}  // namespace trg
