#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"
#include "cmcrd/mcc.hpp"
#include "support.hpp"

using namespace cmcrd;

TEST_CASE("entropy examples") {
  CHECK(entropy(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(entropy(std::vector<double>{1, 0, 0}) == 0.0);
  CHECK(entropy(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(entropy(std::vector<double>{1.2, -0.2}), DomainError);
  CHECK_THROWS_AS(entropy(std::vector<double>{0.5, 0.4}), DomainError);
}

TEST_CASE("certainty weights") {
  Matrix same(4, 3, 1.0 / 3);
  for (double w : mcc_weights(same)) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));

  Matrix two(2, 2);
  two(0, 0) = 1.0;  // H = 0
  two(1, 0) = two(1, 1) = 0.5;  // H = ln 2
  const auto w = mcc_weights(two);
  CHECK(w[0] == doctest::Approx(2.0 * 2.0 / 3.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(2.0 * 1.5 / 3.5).epsilon(1e-12));

  std::mt19937_64 rng(7);
  for (int k = 0; k < 20; ++k) {
    const auto p = testing::random_simplex(1 + k % 8, 2 + k % 4, rng);
    double s = 0.0;
    for (double v : mcc_weights(p)) s += v;
    CHECK(std::abs(s - static_cast<double>(p.rows())) < 1e-9);
  }
}

TEST_CASE("mcc loss against the scalar oracle") {
  Matrix p(2, 2);
  p(0, 0) = 0.9, p(0, 1) = 0.1, p(1, 0) = 0.2, p(1, 1) = 0.8;
  CHECK(std::abs(mcc_loss(p).loss - 0.2514) < 1e-4);
  CHECK(std::abs(mcc_loss(p).loss - testing::mcc_oracle(p)) < 1e-12);

  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto q = testing::random_simplex(1 + k % 8, 2 + k % 4, rng);
    const auto terms = mcc_loss(q);
    CHECK(std::abs(terms.loss - testing::mcc_oracle(q)) < 1e-10);
    for (std::size_t i = 0; i < terms.normalized.rows(); ++i) {
      double s = 0.0;
      for (double v : terms.normalized.row(i)) s += v;
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("mcc loss trivial cases") {
  Matrix eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  CHECK(mcc_loss(eye).loss == doctest::Approx(0.0));
  CHECK(mcc_loss(Matrix(5, 3, 1.0 / 3)).loss == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  Matrix missing(2, 3);  // class 2 never predicted
  missing(0, 0) = missing(1, 1) = 1.0;
  const auto terms = mcc_loss(missing);
  CHECK(terms.guarded_rows == 1);
  CHECK(terms.normalized(2, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("mcc gradient matches finite differences") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    const auto p = testing::random_simplex(3, 3, rng);
    const auto g = mcc_loss_grad(p, mcc_loss(p));
    const auto num = testing::numeric_grad([](const Matrix& q) { return mcc_loss(q).loss; }, p, 1e-7);
    CHECK(testing::rel_error(g, num) < 1e-5);
  }
}

TEST_CASE("teacher loss reduces to cross-entropy and matches finite differences") {
  const Matrix logits = testing::random_matrix(3, 4, 5);
  const std::vector<int> labels = {0, 3, 1};
  CHECK(teacher_loss(logits, labels, 0.0, 2.0).total == cross_entropy(logits, labels));

  for (double lambda1 : {0.0, 0.5, 2.0}) {
    Matrix g;
    teacher_loss(logits, labels, lambda1, 2.0, &g);
    const auto num = testing::numeric_grad(
        [&](const Matrix& z) { return teacher_loss(z, labels, lambda1, 2.0).total; }, logits);
    CHECK(testing::rel_error(g, num) < 1e-6);
  }
}

TEST_CASE("teacher loss vanishes for confident correct predictions") {
  Matrix logits(3, 3, -50.0);
  for (std::size_t i = 0; i < 3; ++i) logits(i, i) = 50.0;
  const std::vector<int> labels = {0, 1, 2};
  CHECK(teacher_loss(logits, labels, 1.0, 1.0).total < 1e-12);
}

TEST_CASE("teacher loss gradient reaches every network parameter") {
  const auto spec = testing::tiny_dnn();
  const auto params = testing::lively_params(spec, 1);
  const Matrix x = testing::random_matrix(3, 4, 2);
  const std::vector<int> labels = {2, 0, 1};
  const double err = testing::param_grad_error(spec, params, x, [&](const ForwardResult& fr, OutputGrads* up) {
    return teacher_loss(fr.logits, labels, 0.7, 2.0, up ? &up->logits : nullptr).total;
  });
  CHECK(err < 1e-4);
}
