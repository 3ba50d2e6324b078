#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spcl {

struct OracleResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured error or statistic
  double threshold = 0.0;
  std::string detail;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t seed_count = 20;
  double eps = 1e-5;
  double tolerance = 1e-4;
  // Test hook: negates every analytic gradient before comparison.
  bool corrupt_backward = false;
};

std::vector<OracleResult> gradient_oracles(const GradcheckOptions& options);
OracleResult topk_oracle(std::uint64_t seed, std::size_t trials = 1000);
OracleResult reservoir_oracle(std::uint64_t seed, std::size_t capacity = 10,
                              std::size_t stream = 100, std::size_t trials = 20000);
OracleResult mas_recurrence_oracle(std::uint64_t seed);
OracleResult dense_equivalence_oracle(std::uint64_t seed, std::size_t steps = 10);
OracleResult score_oracle(std::uint64_t seed);

/// Every oracle above.
std::vector<OracleResult> run_gradcheck(const GradcheckOptions& options);

std::string format_oracle(const OracleResult& r);

}  // namespace spcl
