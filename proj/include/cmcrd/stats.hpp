#pragma once

#include <span>
#include <string>
#include <vector>

namespace cmcrd {

struct TTestResult {
  double p = 1.0;
  double t = 0.0;
  double df = 0.0;
  bool degenerate = false;  // differences had zero variance
  std::vector<double> differences;
};

/// Two-sided paired t-test on a - b. Zero-variance differences give p = 1
/// when all differences are zero and p = 0 otherwise, with `degenerate` set.
/// Throws InputError on length mismatch or fewer than two pairs.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

/// Benjamini-Hochberg step-up adjustment, returned in input order.
/// Throws InputError for p outside [0, 1].
std::vector<double> bh_adjust(std::span<const double> p_values);

struct StatReport {
  std::string method_a;
  std::string method_b;
  std::vector<double> differences;
  double raw_p = 1.0;
  double adjusted_p = 1.0;
  bool degenerate = false;
};

}  // namespace cmcrd
