#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cmcrd/distill.hpp"
#include "cmcrd/errors.hpp"
#include "heads.hpp"

using namespace cmcrd;

namespace {

GuidanceSets split(std::vector<std::size_t> p, std::vector<std::size_t> n) { return GuidanceSets{p, n}; }

}  // namespace

TEST_CASE("literal loss hand example") {
  const std::vector<double> L = {-0.2, -1.0, -0.3, -0.8}, W(4, 1.0);
  const auto r = cmcrd_loss(L, W, split({0, 2}, {1, 3}), 0.07, CmcrdForm::Literal);
  CHECK(r.loss == doctest::Approx(-std::log(0.5 / 1.8)).epsilon(1e-12));
  CHECK(std::abs(r.loss - 1.2809) < 1e-4);
  CHECK_FALSE(r.positive_only);
  CHECK_FALSE(r.negative_only);
}

TEST_CASE("guidance sets follow teacher correctness") {
  Matrix logits(4, 3);
  logits(0, 0) = logits(1, 2) = logits(2, 1) = logits(3, 1) = 1.0;
  const std::vector<int> labels = {0, 1, 1, 1};
  const auto sets = build_guidance_sets(logits, labels);
  CHECK(sets.positive == std::vector<std::size_t>{0, 2, 3});
  CHECK(sets.negative == std::vector<std::size_t>{1});
}

TEST_CASE("empty sets fall back to the surrogate terms") {
  const std::vector<double> L = {-0.5, -1.5, -0.25}, W = {1.2, 0.6, 1.2};
  const auto pos = cmcrd_loss(L, W, all_positive(3), 0.1, CmcrdForm::Literal);
  CHECK(pos.positive_only);
  CHECK(pos.loss == doctest::Approx(cmcrd_loss(L, W, all_positive(3), 0.1, CmcrdForm::Surrogate).loss));
  const auto neg = cmcrd_loss(L, W, split({}, {0, 1, 2}), 0.1, CmcrdForm::Literal);
  CHECK(neg.negative_only);
  CHECK(neg.loss == doctest::Approx((1.2 * -0.5 + 0.6 * -1.5 + 1.2 * -0.25) / 0.1 / 3.0));
  CHECK(std::isfinite(cmcrd_loss(std::vector<double>{0.0, 0.0}, std::vector<double>{1, 1}, split({0}, {1}), 0.1,
                                 CmcrdForm::Literal).loss));
}

TEST_CASE("input validation") {
  const std::vector<double> L = {-1, -2}, W = {1, 1};
  CHECK_THROWS_AS(cmcrd_loss(L, std::vector<double>{1}, all_positive(2), 0.1, CmcrdForm::Literal), ShapeError);
  CHECK_THROWS_AS(cmcrd_loss(L, W, all_positive(2), 0.0, CmcrdForm::Literal), DomainError);
  CHECK_THROWS_AS(cmcrd_loss(L, W, all_positive(1), 0.1, CmcrdForm::Literal), ShapeError);
  CHECK_THROWS_AS(parse_cmcrd_form("exact"), ConfigError);
}

TEST_CASE("with uniform weights the loss ignores their order") {
  std::mt19937_64 rng(1);
  std::vector<double> L = {-0.4, -0.9, -0.1, -1.3, -0.6};
  std::vector<double> W(5, 1.0);
  const auto sets = split({0, 3, 4}, {1, 2});
  const double base = cmcrd_loss(L, W, sets, 0.07, CmcrdForm::Literal).loss;
  std::shuffle(W.begin(), W.end(), rng);
  CHECK(cmcrd_loss(L, W, sets, 0.07, CmcrdForm::Literal).loss == base);
}

TEST_CASE("without the split and the weights the surrogate is the scaled contrastive objective") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto f = testing::ContrastFixture::make(4, 100 + seed);
    const Matrix s = normalize_rows(testing::random_matrix(3, 6, 200 + seed));
    const auto terms = contrast_objective(f.teacher, s, f.bank, f.negatives, f.scale);
    const std::vector<double> W(3, 1.0);
    for (CmcrdForm form : {CmcrdForm::Surrogate, CmcrdForm::Literal}) {
      const double loss = cmcrd_loss(terms.per_sample, W, all_positive(3), 0.07, form).loss;
      CHECK(std::abs(loss + terms.objective / 0.07) < 1e-9);
    }
  }
}

TEST_CASE("both forms back-propagate to the network parameters") {
  const auto f = testing::ContrastFixture::make(4, 50);
  const auto spec = testing::tiny_dnn();
  const auto params = testing::lively_params(spec, 51);
  const Matrix x = testing::random_matrix(3, 4, 52);
  const std::vector<double> W = {1.3, 0.8, 0.9};
  for (CmcrdForm form : {CmcrdForm::Literal, CmcrdForm::Surrogate})
    for (const auto& sets : {split({0, 2}, {1}), all_positive(3)}) {
      auto loss = [&](const std::vector<double>& l, std::vector<double>* d) {
        auto r = cmcrd_loss(l, W, sets, 0.07, form);
        if (d) *d = r.d_per_sample;
        return r.loss;
      };
      CHECK(testing::param_grad_error(spec, params, x, testing::contrast_head(f, loss)) < 1e-4);
    }
}
