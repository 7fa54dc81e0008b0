#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "cmcrd/critic.hpp"
#include "cmcrd/errors.hpp"
#include "heads.hpp"

using namespace cmcrd;

TEST_CASE("critic score") {
  CHECK(std::abs(critic_score(0.0, CriticScale{0.07, 16, 16}) - 0.5) < 1e-12);
  const CriticScale s{0.1, 4, 100};
  for (double u : {-1.0, -0.3, 0.0, 0.4, 1.0}) {
    const double direct = std::exp(u / 0.1) / (std::exp(u / 0.1) + 4.0 / 100.0);
    CHECK(critic_score(u, s) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(critic_log_score(u, s) == doctest::Approx(std::log(direct)).epsilon(1e-12));
    CHECK(critic_log_complement(u, s) == doctest::Approx(std::log1p(-direct)).epsilon(1e-9));
  }
  // tiny tau saturates without overflow
  CHECK(std::isfinite(critic_log_complement(1.0, CriticScale{1e-4, 10, 10})));
  CHECK(std::isfinite(critic_log_score(-1.0, CriticScale{1e-4, 10, 10})));
}

TEST_CASE("row normalisation") {
  Matrix x = testing::random_matrix(4, 5, 1);
  for (double& v : x.row(2)) v = 0.0;
  std::vector<double> norms;
  const Matrix y = normalize_rows(x, &norms);
  for (std::size_t i : {0u, 1u, 3u}) {
    double s = 0.0;
    for (double v : y.row(i)) s += v * v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (double v : y.row(2)) CHECK(v == 0.0);

  const Matrix w = testing::random_matrix(4, 5, 2);
  auto f = [&](const Matrix& z) {
    const Matrix n = normalize_rows(z);
    double s = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) s += w.data()[i] * n.data()[i];
    return s;
  };
  const Matrix x1 = testing::random_matrix(4, 5, 3);
  std::vector<double> n1;
  const Matrix y1 = normalize_rows(x1, &n1);
  CHECK(testing::rel_error(normalize_rows_backward(y1, n1, w), testing::numeric_grad(f, x1)) < 1e-7);
}

TEST_CASE("memory bank") {
  const std::vector<int> labels = {0, 0, 1, 1, 1, 2};
  MemoryBank bank(testing::random_matrix(6, 4, 1), testing::random_matrix(6, 4, 2), labels, 0.5);
  auto unit = [](const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (double v : m.row(i)) s += v * v;
      if (std::abs(s - 1.0) > 1e-12) return false;
    }
    return true;
  };
  CHECK(unit(bank.teacher()));
  CHECK(unit(bank.student()));
  CHECK(bank.max_negatives() == 3);  // class 1 has 3 others

  std::mt19937_64 rng(4);
  for (int label : {0, 1, 2}) {
    const auto negs = bank.sample_negatives(label, 3, rng);
    CHECK(std::set<std::size_t>(negs.begin(), negs.end()).size() == 3);
    for (auto j : negs) CHECK(labels[j] != label);
  }
  CHECK_THROWS_AS(bank.sample_negatives(1, 4, rng), SamplingError);

  const std::vector<std::size_t> slots = {0, 5};
  bank.update(slots, testing::random_matrix(2, 4, 5), testing::random_matrix(2, 4, 6));
  CHECK(unit(bank.teacher()));
  CHECK(unit(bank.student()));
}

TEST_CASE("contrastive objective bound and reference values") {
  const auto f = testing::ContrastFixture::make(4, 10);
  const Matrix s = normalize_rows(testing::random_matrix(3, 6, 20));
  const auto terms = contrast_objective(f.teacher, s, f.bank, f.negatives, f.scale);
  for (std::size_t i = 0; i < 3; ++i) {
    double li = 0.0;
    for (std::size_t c = 0; c < 6; ++c) li += f.teacher(i, c) * s(i, c);
    li = critic_log_score(li, f.scale);
    for (auto j : f.negatives[i]) {
      double a = 0.0, b = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        a += f.bank.teacher()(j, c) * s(i, c);
        b += f.teacher(i, c) * f.bank.student()(j, c);
      }
      li += 0.5 * (critic_log_complement(a, f.scale) + critic_log_complement(b, f.scale));
    }
    CHECK(terms.per_sample[i] == doctest::Approx(li).epsilon(1e-12));
    CHECK(terms.per_sample[i] <= 0.0);
  }
  CHECK(terms.bound == doctest::Approx(std::log(3.0) + terms.objective).epsilon(1e-12));
}

TEST_CASE("contrastive gradient matches finite differences") {
  const auto f = testing::ContrastFixture::make(4, 30);
  const Matrix t = f.teacher;
  const Matrix s0 = normalize_rows(testing::random_matrix(3, 6, 4));
  std::vector<double> up = {0.3, -1.2, 0.7};
  auto value = [&](const Matrix& s) {
    const auto terms = contrast_objective(t, s, f.bank, f.negatives, f.scale);
    double v = 0;
    for (std::size_t i = 0; i < 3; ++i) v += up[i] * terms.per_sample[i];
    return v;
  };
  const auto terms = contrast_objective(t, s0, f.bank, f.negatives, f.scale);
  CHECK(testing::rel_error(contrast_backward(t, f.bank, f.negatives, terms, f.scale, up),
                           testing::numeric_grad(value, s0)) < 1e-6);

  const auto spec = testing::tiny_dnn();
  CHECK(testing::param_grad_error(spec, testing::lively_params(spec, 5), testing::random_matrix(3, 4, 6),
                                  testing::contrast_head(f, testing::mean_objective)) < 1e-4);
}
