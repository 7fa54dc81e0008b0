#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cmcrd/errors.hpp"
#include "cmcrd/stats.hpp"
#include "support.hpp"

using namespace cmcrd;

TEST_CASE("Benjamini-Hochberg examples") {
  CHECK(bh_adjust(std::vector<double>{0.01, 0.02, 0.03}) == std::vector<double>{0.03, 0.03, 0.03});
  const auto a = bh_adjust(std::vector<double>{0.04, 0.001, 0.5, 0.02});
  CHECK(a[1] == doctest::Approx(0.004));
  CHECK(a[3] == doctest::Approx(0.04));
  CHECK(a[0] == doctest::Approx(0.04 * 4 / 3));
  CHECK(a[2] == doctest::Approx(0.5));
  CHECK(bh_adjust(std::vector<double>{}).empty());
  CHECK(bh_adjust(std::vector<double>{0.9, 0.8})[0] == doctest::Approx(0.9));
  CHECK_THROWS_AS(bh_adjust(std::vector<double>{0.2, 1.5}), InputError);
}

TEST_CASE("paired t-test") {
  const std::vector<double> a = {0.51, 0.53, 0.52, 0.50, 0.54}, b(5, 0.50);
  const auto r = paired_ttest(a, b);
  CHECK(r.t == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-9));
  CHECK(r.df == 4.0);
  CHECK(r.p > 0.04);
  CHECK(r.p < 0.05);
  CHECK_FALSE(r.degenerate);

  CHECK(paired_ttest(b, b).p == 1.0);
  CHECK(paired_ttest(b, b).degenerate);
  const std::vector<double> shifted(5, 0.6);
  CHECK(paired_ttest(shifted, b).p == 0.0);
  CHECK_THROWS_AS(paired_ttest(a, std::vector<double>{1.0}), InputError);
  CHECK_THROWS_AS(paired_ttest(std::vector<double>{1.0}, std::vector<double>{1.0}), InputError);
}

TEST_CASE("t-test decisions agree with a permutation oracle on clear cases") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < 6; ++k) {
    const double effect = k % 2 ? 1.5 : 0.0;
    std::vector<double> a(20), b(20, 0.0);
    for (double& v : a) v = effect + noise(rng);
    const bool t_rejects = paired_ttest(a, b).p < 0.05;
    const bool perm_rejects = testing::permutation_pvalue(a, 20000, 100 + k) < 0.05;
    CHECK(t_rejects == perm_rejects);
  }
}
