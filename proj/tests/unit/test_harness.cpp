#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cmcrd/errors.hpp"
#include "cmcrd/harness.hpp"

using namespace cmcrd;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 1) {
  SynthSpec s = *synth_preset("seed-like");
  s.num_subjects = 3;
  s.sessions_per_subject = 1;
  s.samples_per_trial = 3;
  s.eeg_dim = 20;
  s.em_dim = 6;
  s.latent_dim = 4;
  s.seed = seed;
  return generate_synthetic(s);
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.hidden = {12, 8};
  c.feature_dim = 6;
  c.teacher.embed_dim = 8;
  c.teacher.epochs = 3;
  c.student.epochs = 3;
  c.student.batch_size = 8;
  c.teacher.batch_size = 8;
  c.distill.negatives = 16;
  c.seeds = {0, 1};
  c.jobs = 1;
  return c;
}

nlohmann::json without_clock(const RunResult& r) {
  auto j = to_json(r);
  j.erase("train_seconds");
  j.erase("test_seconds");
  return j;
}

}  // namespace

TEST_CASE("a poisoned test sample cannot reach any trained state") {
  for (Protocol p : {Protocol::WithinSubject, Protocol::CrossSubject}) {
    CAPTURE(to_string(p));
    ExperimentConfig c = tiny_config();
    c.protocol = p;
    const Dataset clean = tiny_dataset();
    const Fold fold = make_splits(clean, p, c.val_fraction, 0).folds[1];

    Dataset poisoned = clean;
    FlatData flat_poisoned = flatten(clean);
    const std::size_t victim = fold.test.front();
    for (double& v : flat_poisoned.eeg.row(victim)) v = 1e6;
    for (double& v : flat_poisoned.em.row(victim)) v = -1e6;

    const auto a = train_fold(clean, flatten(clean), fold, c, 3);
    const auto b = train_fold(poisoned, flat_poisoned, fold, c, 3);
    CHECK(a.teacher->params == b.teacher->params);
    CHECK(a.teacher->embed == b.teacher->embed);
    CHECK(a.student.model.params == b.student.model.params);
    CHECK(a.student.model.distiller == b.student.model.distiller);
  }
}

TEST_CASE("lambda2 = 0 reproduces the plain student bit for bit") {
  const Dataset d = tiny_dataset();
  ExperimentConfig none = tiny_config(), zero = tiny_config();
  none.distill.method = DistillMethod::None;
  zero.distill.lambda2 = 0.0;
  const FlatData flat = flatten(d);
  const Fold fold = make_within_subject_splits(d).folds[0];
  const auto a = train_fold(d, flat, fold, none, 0);
  const auto b = train_fold(d, flat, fold, zero, 0);
  CHECK(a.student.model.params == b.student.model.params);
  CHECK(a.test_probs == b.test_probs);
  CHECK(run_protocol(d, zero)[0].method == "none");
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  const Dataset d = tiny_dataset();
  ExperimentConfig c = tiny_config();
  c.protocol = Protocol::CrossSubject;
  const auto a = run_protocol(d, c);
  c.jobs = 2;
  const auto b = run_protocol(d, c);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(without_clock(a[i]) == without_clock(b[i]));
  CHECK(a[0].fold_ids == std::vector<int>{0, 1, 2});
  CHECK(a[0].teacher_accuracies.size() == 3);
}

TEST_CASE("the bare ablation cell is the contrastive baseline") {
  const Dataset d = tiny_dataset();
  ExperimentConfig c = tiny_config();
  c.seeds = {0};
  TeacherCache cache;
  const auto cells = run_ablation_grid(d, c, &cache);
  REQUIRE(cells.size() == 8);
  CHECK(cells[0].key() == "mcc=0,us=0,iew=0");
  CHECK(cells[7].key() == "mcc=1,us=1,iew=1");
  for (const auto& cell : cells) CHECK(cell.error.empty());
  c.distill.method = DistillMethod::Crd;
  CHECK(run_protocol(d, c, &cache)[0].fold_accuracies == cells[0].runs[0].fold_accuracies);
}

TEST_CASE("every method trains on the tiny benchmark") {
  const Dataset d = tiny_dataset();
  ExperimentConfig c = tiny_config();
  c.seeds = {0};
  TeacherCache cache;
  for (const auto& m : distill_method_names()) {
    CAPTURE(m);
    apply_setting(c, "method", m);
    const auto runs = run_protocol(d, c, &cache);
    CHECK(runs[0].fold_accuracies.size() == 3);
    CHECK(runs[0].mean >= 0.0);
  }
  CHECK(cache.size() == 2 * 3);  // per fold: lambda1 > 0 for cmcrd, 0 for the others
}

TEST_CASE("negatives are clamped to the class pools") {
  const Dataset d = tiny_dataset();
  ExperimentConfig c = tiny_config();
  c.seeds = {0};
  c.distill.negatives = 100000;
  const auto r = run_protocol(d, c)[0];
  CHECK(r.negatives_clamped);
  CHECK(r.negatives_used < 100000);
}

TEST_CASE("decision fusion and inference timing") {
  Matrix a(2, 3), b(2, 3);
  a(0, 0) = 0.6, a(0, 1) = 0.4;
  b(0, 0) = 0.4, b(0, 1) = 0.6;  // tie -> class 0
  a(1, 2) = b(1, 1) = 1.0;       // tie -> class 1
  CHECK(fuse_predictions(a, b) == std::vector<int>{0, 1});
  CHECK_THROWS_AS(fuse_predictions(a, Matrix(2, 2)), ShapeError);

  const Dataset d = tiny_dataset();
  const auto runs = decision_fusion_eval(d, tiny_config());
  CHECK(runs[0].method == "fusion");
  CHECK(runs[0].label == "EM + EEG");
  CHECK(runs[0].fold_accuracies.size() == 3);
}

TEST_CASE("result files round trip and compare") {
  const Dataset d = tiny_dataset();
  ExperimentConfig c = tiny_config();
  const auto cmcrd_runs = run_protocol(d, c);
  c.distill.method = DistillMethod::None;
  const auto none_runs = run_protocol(d, c);

  const fs::path dir = fs::temp_directory_path() / "cmcrd_results";
  fs::create_directories(dir);
  write_results_jsonl(cmcrd_runs, dir / "a.jsonl");
  const auto back = read_results_jsonl(dir / "a.jsonl");
  REQUIRE(back.size() == cmcrd_runs.size());
  CHECK(to_json(back[1]) == to_json(cmcrd_runs[1]));
  write_summary_csv(cmcrd_runs, dir / "summary.csv");
  std::ifstream summary(dir / "summary.csv");
  std::string header;
  std::getline(summary, header);
  CHECK(header.find("within") != std::string::npos);

  const auto reports = compare_runs(cmcrd_runs, {none_runs});
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].differences.size() == 3);
  CHECK(reports[0].adjusted_p >= reports[0].raw_p);

  auto fewer = none_runs;
  for (auto& r : fewer) {
    r.fold_ids.pop_back();
    r.fold_accuracies.pop_back();
  }
  CHECK_THROWS_AS(compare_runs(cmcrd_runs, {fewer}), InputError);
  CHECK_THROWS_AS(read_results_jsonl(dir / "missing.jsonl"), InputError);
  fs::remove_all(dir);
}

TEST_CASE("configuration keys") {
  ExperimentConfig c;
  CHECK_THROWS_AS(apply_setting(c, "lamda2", "0.1"), ConfigError);
  CHECK_THROWS_AS(apply_json(c, nlohmann::json{{"no_such_key", 1}}), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "negatives", "many"), ConfigError);

  apply_setting(c, "lambda2", "0.5");
  apply_setting(c, "seeds", "3,4");
  apply_setting(c, "us", "false");
  apply_setting(c, "method", "rkd");
  apply_setting(c, "protocol", "cross");
  CHECK(c.distill.lambda2 == 0.5);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK_FALSE(c.distill.us_enabled);
  CHECK(c.distill.method == DistillMethod::Rkd);

  ExperimentConfig round;
  apply_json(round, to_json(c));
  CHECK(to_json(round) == to_json(c));
  CHECK(config_hash(round) == config_hash(c));
  round.out = "elsewhere";
  round.jobs = 7;
  CHECK(config_hash(round) == config_hash(c));
  round.distill.tau = 0.5;
  CHECK(config_hash(round) != config_hash(c));

  for (const auto& k : config_keys()) CHECK(to_json(ExperimentConfig{}).contains(k.name));

  const fs::path file = fs::temp_directory_path() / "cmcrd_cfg.txt";
  std::ofstream(file) << "# comment\nlambda2 = 0.3\nepochs=7\n";
  ExperimentConfig f;
  apply_config_file(f, file);
  CHECK(f.distill.lambda2 == 0.3);
  CHECK(f.student.epochs == 7);
  std::ofstream(file) << "{\"tau\": 0.2, \"method\": \"kd\"}";
  apply_config_file(f, file);
  CHECK(f.distill.tau == 0.2);
  std::ofstream(file) << "lambda2\n";
  CHECK_THROWS_AS(apply_config_file(f, file), ConfigError);
  fs::remove(file);

  ExperimentConfig bad;
  bad.distill.tau = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = ExperimentConfig{};
  bad.arch = Family::Dgcnn;
  bad.direction = Direction::EegToEm;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}
