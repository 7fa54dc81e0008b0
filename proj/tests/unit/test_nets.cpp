#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "cmcrd/errors.hpp"
#include "cmcrd/mcc.hpp"
#include "cmcrd/nets.hpp"
#include "cmcrd/serialize.hpp"
#include "cmcrd/training.hpp"
#include "support.hpp"

using namespace cmcrd;

namespace {

NetworkSpec tiny_dgcnn() {
  NetworkSpec s = NetworkSpec::dgcnn(3, 2, 3);
  s.hidden = {4, 3};
  s.feature_dim = 3;
  return s;
}

testing::Head ce_head(std::vector<int> labels) {
  return [labels](const ForwardResult& fr, OutputGrads* up) {
    return cross_entropy(fr.logits, labels, up ? &up->logits : nullptr);
  };
}

// Weighted sum of every extractor layer output, to exercise hint gradients.
testing::Head layer_head() {
  return [](const ForwardResult& fr, OutputGrads* up) {
    double v = 0.0;
    for (std::size_t l = 0; l < fr.layer_outputs.size(); ++l) {
      const Matrix w = testing::random_matrix(fr.layer_outputs[l].rows(), fr.layer_outputs[l].cols(), 90 + l);
      for (std::size_t i = 0; i < w.size(); ++i) v += w.data()[i] * fr.layer_outputs[l].data()[i];
      if (up) up->layers[l] = w;
    }
    return v;
  };
}

}  // namespace

TEST_CASE("DNN shapes and gradients") {
  auto spec = testing::tiny_dnn();
  spec.hidden = {5, 4};
  const auto params = init_params(spec, 1);
  CHECK(params == init_params(spec, 1));
  CHECK_FALSE(params == init_params(spec, 2));
  const Matrix x = testing::random_matrix(3, 4, 2);
  const auto fr = forward(spec, params, x);
  CHECK(fr.layer_outputs.size() == spec.extractor_layers());
  CHECK(fr.features().cols() == spec.feature_dim);
  CHECK(fr.logits.cols() == 3);
  const auto lively = testing::lively_params(spec, 1);
  CHECK(testing::param_grad_error(spec, lively, x, ce_head({0, 2, 1})) < 1e-4);
  CHECK(testing::param_grad_error(spec, lively, x, layer_head()) < 1e-4);
}

TEST_CASE("DGCNN shapes and gradients") {
  const auto spec = tiny_dgcnn();
  const auto params = init_params(spec, 3);
  const Matrix adj = params.at("graph.adjacency");
  for (std::size_t i = 0; i < adj.rows(); ++i)
    for (std::size_t j = 0; j < adj.cols(); ++j) CHECK(adj(i, j) == adj(j, i));
  const Matrix x = testing::random_matrix(3, 6, 4);
  CHECK(forward(spec, params, x).logits.rows() == 3);
  const auto lively = testing::lively_params(spec, 3);
  CHECK(testing::param_grad_error(spec, lively, x, ce_head({1, 1, 0})) < 1e-4);
  CHECK(testing::param_grad_error(spec, lively, x, layer_head()) < 1e-4);
}

TEST_CASE("spec validation") {
  NetworkSpec s = NetworkSpec::dgcnn(3, 2, 3);
  s.input_dim = 7;
  CHECK_THROWS_AS(validate(s), ConfigError);
  NetworkSpec d = testing::tiny_dnn();
  d.num_classes = 1;
  CHECK_THROWS(validate(d));
  CHECK_THROWS_AS(forward(testing::tiny_dnn(), init_params(testing::tiny_dnn(), 1), Matrix(2, 5)), ShapeError);
}

TEST_CASE("linear map gradients") {
  const auto p = init_linear(4, 3, 5, "lin");
  const Matrix x = testing::random_matrix(2, 4, 6), w = testing::random_matrix(2, 3, 7);
  ParamSet g = p.zeros_like();
  const Matrix dx = linear_backward(p, "lin", x, w, g);
  auto f = [&](const Matrix& in) {
    const Matrix y = linear_forward(p, "lin", in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
    return s;
  };
  CHECK(testing::rel_error(dx, testing::numeric_grad(f, x)) < 1e-8);
}

TEST_CASE("optimizer rules") {
  ParamSet p;
  p.add("w", Matrix(1, 2, 1.0));
  ParamSet g;
  g.add("w", Matrix(1, 2, 0.5));

  OptimizerConfig sgd;
  sgd.learning_rate = 0.1;
  sgd.weight_decay = 0.01;
  auto st = make_optimizer(sgd, p);
  ParamSet q = p;
  opt_step(st, q, g);
  CHECK(q.at("w")(0, 0) == doctest::Approx(1.0 - 0.1 * (0.5 + 0.01)).epsilon(1e-14));

  OptimizerConfig adam;
  adam.rule = OptRule::Adam;
  adam.learning_rate = 0.01;
  adam.weight_decay = 0.0;
  st = make_optimizer(adam, p);
  q = p;
  opt_step(st, q, g);
  CHECK(q.at("w")(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));

  OptimizerConfig mom;
  mom.rule = OptRule::SgdMomentum;
  mom.weight_decay = 0.0;
  mom.learning_rate = 1.0;
  st = make_optimizer(mom, p);
  q = p;
  opt_step(st, q, g);
  opt_step(st, q, g);
  CHECK(q.at("w")(0, 0) == doctest::Approx(1.0 - 0.5 - (0.9 * 0.5 + 0.5)).epsilon(1e-12));

  g.at("w")(0, 1) = std::numeric_limits<double>::quiet_NaN();
  q = p;
  CHECK_THROWS_AS(opt_step(st, q, g, "epoch 3 batch 1"), TrainingError);
  CHECK(q == p);
  CHECK_THROWS_AS(parse_opt_rule("rmsprop"), ConfigError);
}

TEST_CASE("checkpoints round trip exactly") {
  const auto spec = tiny_dgcnn();
  const auto params = init_params(spec, 9);
  const auto path = std::filesystem::temp_directory_path() / "cmcrd_params.json";
  save_params(params, path);
  CHECK(load_params(path) == params);
  CHECK(network_spec_from_json(to_json(spec)).hidden == spec.hidden);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_params(path), LoadError);
}

TEST_CASE("evaluation helpers") {
  Matrix p(4, 3);
  p(0, 0) = p(1, 1) = p(2, 2) = 1.0;
  p(3, 0) = p(3, 1) = 0.5;  // tie goes to class 0
  CHECK(argmax_rows(p) == std::vector<int>{0, 1, 2, 0});
  CHECK(accuracy(p, std::vector<int>{0, 1, 1, 0}) == doctest::Approx(0.75));
  const std::vector<int> keys = {7, 7, 7, 9};
  CHECK(trial_vote_accuracy(p, std::vector<int>{0, 0, 0, 0}, keys) == doctest::Approx(1.0));

  std::mt19937_64 rng(1);
  const auto batches = make_batches(10, 4, rng);
  CHECK(batches.size() == 3);
  CHECK(batches.back().size() == 2);
}
