#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cmcrd/errors.hpp"
#include "cmcrd/splits.hpp"

using namespace cmcrd;

namespace {

Dataset preset_geometry(const std::string& name, std::size_t subjects = 3) {
  SynthSpec s = *synth_preset(name);
  s.num_subjects = subjects;
  s.samples_per_trial = 2;
  s.eeg_dim = 10;
  return generate_synthetic(s);
}

}  // namespace

TEST_CASE("within-subject training uses the leading trials of every session") {
  for (const auto& [name, k] : {std::pair{"seed-like", 9}, {"seediv-like", 16}, {"seedv-like", 10}}) {
    CAPTURE(name);
    const Dataset d = preset_geometry(name);
    const FlatData flat = flatten(d);
    const SplitPlan plan = make_within_subject_splits(d);
    REQUIRE(plan.folds.size() == 3);
    for (const auto& f : plan.folds) {
      CHECK(f.validation.empty());
      for (auto r : f.train) {
        CHECK(flat.subject[r] == f.subject_id);
        CHECK(flat.trial[r] <= k);
      }
      for (auto r : f.test) {
        CHECK(flat.subject[r] == f.subject_id);
        CHECK(flat.trial[r] > k);
      }
      CHECK(f.train.size() == 3 * static_cast<std::size_t>(k) * 2);
      std::set<int> trials;
      for (auto r : f.train) trials.insert(flat.trial[r]);
      CHECK(trials.size() == static_cast<std::size_t>(k));
    }
  }
}

TEST_CASE("within-subject trial count can be overridden and is checked") {
  const Dataset d = preset_geometry("seed-like");
  CHECK(make_within_subject_splits(d, 5).folds[0].train.size() == 3 * 5 * 2);
  CHECK_THROWS_AS(make_within_subject_splits(d, 15), ProtocolError);
  CHECK_THROWS_AS(make_within_subject_splits(d, 0), ProtocolError);
}

TEST_CASE("leave-one-subject-out partitions the samples") {
  const Dataset d = preset_geometry("seed-like", 4);
  const FlatData flat = flatten(d);
  const SplitPlan plan = make_cross_subject_splits(d, 0.1, 7);
  CHECK(plan.folds.size() == 4);
  std::vector<int> tested(flat.size(), 0);
  for (const auto& f : plan.folds) {
    for (auto r : f.test) {
      ++tested[r];
      CHECK(flat.subject[r] == f.subject_id);
    }
    std::vector<std::size_t> all = f.train;
    all.insert(all.end(), f.validation.begin(), f.validation.end());
    all.insert(all.end(), f.test.begin(), f.test.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all.size() == flat.size());
    for (auto r : f.train) CHECK(flat.subject[r] != f.subject_id);
    CHECK(f.validation.size() == static_cast<std::size_t>(std::llround(0.1 * (flat.size() - f.test.size()))));
  }
  CHECK(std::all_of(tested.begin(), tested.end(), [](int c) { return c == 1; }));
  CHECK(make_cross_subject_splits(d, 0.1, 7).folds[2].validation == plan.folds[2].validation);
  CHECK_THROWS_AS(make_cross_subject_splits(d, 1.0, 7), ConfigError);
  CHECK_THROWS_AS(make_cross_subject_splits(preset_geometry("seed-like", 1), 0.1, 7), ProtocolError);
}

TEST_CASE("standardisation statistics come from training rows only") {
  const Dataset d = preset_geometry("seed-like");
  FlatData flat = flatten(d);
  const SplitPlan plan = make_within_subject_splits(d);
  const Fold& f = plan.folds[0];
  const FoldData a = normalize_features(flat, f);
  for (auto r : f.test) flat.eeg(r, 0) += 1e6;
  const FoldData b = normalize_features(flat, f);
  CHECK(a.eeg_stats.mean == b.eeg_stats.mean);
  CHECK(a.train.eeg == b.train.eeg);

  for (std::size_t c = 0; c < a.train.eeg.cols(); ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < a.train.size(); ++i) m += a.train.eeg(i, c);
    m /= static_cast<double>(a.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) v += std::pow(a.train.eeg(i, c) - m, 2);
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(v / static_cast<double>(a.train.size()) - 1.0) < 1e-9);
  }
}

TEST_CASE("constant features standardise to zero") {
  Matrix x(4, 2);
  for (std::size_t i = 0; i < 4; ++i) x(i, 0) = 5.0, x(i, 1) = static_cast<double>(i);
  const auto s = Standardizer::fit(x, {0, 1, 2, 3});
  const Matrix y = s.apply(x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y(i, 0) == 0.0);
  CHECK_THROWS_AS(s.apply(Matrix(1, 3)), ShapeError);
}
