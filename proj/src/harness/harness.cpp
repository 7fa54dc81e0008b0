#include "cmcrd/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>

#include "cmcrd/errors.hpp"
#include "cmcrd/hash.hpp"
#include "cmcrd/training.hpp"

namespace cmcrd {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

double score(const Matrix& probs, const SplitData& split, bool trial_vote) {
  return trial_vote ? trial_vote_accuracy(probs, split.labels, split.trial_keys)
                    : accuracy(probs, split.labels);
}

// Rethrows `e` with a prefix, keeping the error category.
[[noreturn]] void rethrow_annotated(std::exception_ptr e, const std::string& where) {
  try {
    std::rethrow_exception(e);
  } catch (const SamplingError& x) {
    throw SamplingError(where + ": " + x.what());
  } catch (const TrainingError& x) {
    throw TrainingError(where + ": " + x.what());
  } catch (const ConfigError& x) {
    throw ConfigError(where + ": " + x.what());
  } catch (const std::exception& x) {
    throw TrainingError(where + ": " + x.what());
  }
}

std::vector<SplitPlan> plans_per_seed(const Dataset& d, const ExperimentConfig& c) {
  std::optional<std::size_t> trials;
  if (c.train_trials) trials = c.train_trials;
  std::vector<SplitPlan> plans;
  for (auto seed : c.seeds) plans.push_back(make_splits(d, c.protocol, c.val_fraction, seed, trials));
  return plans;
}

// Runs fn(seed_index, fold) over every (seed, fold) pair on config.jobs
// workers; results land in per-task slots so the merge ignores scheduling.
template <typename Fn>
auto run_tasks(const std::vector<SplitPlan>& plans, const ExperimentConfig& c, Fn fn) {
  using Out = decltype(fn(std::size_t{0}, plans[0].folds[0]));
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t s = 0; s < plans.size(); ++s)
    for (std::size_t f = 0; f < plans[s].folds.size(); ++f) tasks.emplace_back(s, f);
  std::vector<Out> out(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  const int workers = c.jobs ? static_cast<int>(c.jobs) : omp_get_num_procs();
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    try {
      out[t] = fn(tasks[t].first, plans[tasks[t].first].folds[tasks[t].second]);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  }
  for (std::size_t t = 0; t < tasks.size(); ++t)
    if (errors[t])
      rethrow_annotated(errors[t], "fold " + std::to_string(plans[tasks[t].first].folds[tasks[t].second].fold_id) +
                                       " seed " + std::to_string(c.seeds[tasks[t].first]));
  return std::make_pair(tasks, std::move(out));
}

RunResult result_shell(const Dataset& d, const ExperimentConfig& c, std::uint64_t seed, std::string method) {
  RunResult r;
  r.protocol = to_string(c.protocol);
  r.label = method_label(method, c.direction);
  r.method = std::move(method);
  r.direction = to_string(c.direction);
  r.arch = to_string(c.arch);
  r.dataset = d.name;
  r.seed = seed;
  r.config_hash = config_hash(c);
  return r;
}

const TeacherModel& no_teacher() {
  static const TeacherModel empty;
  return empty;
}

}  // namespace

// ---------------------------------------------------------------------------

void RunResult::finalize() {
  const double n = static_cast<double>(fold_accuracies.size());
  mean = n ? std::accumulate(fold_accuracies.begin(), fold_accuracies.end(), 0.0) / n : 0.0;
  double ss = 0.0;
  for (double a : fold_accuracies) ss += (a - mean) * (a - mean);
  std = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
}

json to_json(const RunResult& r) {
  return {{"protocol", r.protocol},
          {"method", r.method},
          {"label", r.label},
          {"direction", r.direction},
          {"arch", r.arch},
          {"dataset", r.dataset},
          {"seed", r.seed},
          {"config_hash", r.config_hash},
          {"fold_ids", r.fold_ids},
          {"subject_ids", r.subject_ids},
          {"fold_accuracies", r.fold_accuracies},
          {"teacher_accuracies", r.teacher_accuracies},
          {"mean", r.mean},
          {"std", r.std},
          {"negatives_used", r.negatives_used},
          {"negatives_clamped", r.negatives_clamped},
          {"fallback_counts", {{"positive_only", r.positive_only_batches}, {"negative_only", r.negative_only_batches}}},
          {"train_seconds", r.train_seconds},
          {"test_seconds", r.test_seconds}};
}

RunResult run_result_from_json(const json& j) {
  try {
    RunResult r;
    r.protocol = j.at("protocol").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.label = j.value("label", r.method);
    r.direction = j.value("direction", std::string{});
    r.arch = j.value("arch", std::string{});
    r.dataset = j.value("dataset", std::string{});
    r.seed = j.value("seed", std::uint64_t{0});
    r.config_hash = j.value("config_hash", std::string{});
    r.fold_ids = j.at("fold_ids").get<std::vector<int>>();
    r.subject_ids = j.value("subject_ids", std::vector<int>{});
    r.fold_accuracies = j.at("fold_accuracies").get<std::vector<double>>();
    r.teacher_accuracies = j.value("teacher_accuracies", std::vector<double>{});
    r.negatives_used = j.value("negatives_used", std::size_t{0});
    r.negatives_clamped = j.value("negatives_clamped", false);
    if (j.contains("fallback_counts")) {
      r.positive_only_batches = j["fallback_counts"].value("positive_only", std::size_t{0});
      r.negative_only_batches = j["fallback_counts"].value("negative_only", std::size_t{0});
    }
    r.train_seconds = j.value("train_seconds", 0.0);
    r.test_seconds = j.value("test_seconds", 0.0);
    if (r.fold_ids.size() != r.fold_accuracies.size())
      throw InputError("result record: fold_ids and fold_accuracies differ in length");
    r.finalize();
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("result record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::shared_ptr<const TeacherModel> TeacherCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = store_.find(key);
  return it == store_.end() ? nullptr : it->second;
}

std::shared_ptr<const TeacherModel> TeacherCache::insert(const std::string& key, TeacherModel model) {
  std::lock_guard lock(mutex_);
  auto [it, fresh] = store_.emplace(key, nullptr);
  if (fresh) it->second = std::make_shared<const TeacherModel>(std::move(model));
  return it->second;
}

std::size_t TeacherCache::size() const {
  std::lock_guard lock(mutex_);
  return store_.size();
}

// ---------------------------------------------------------------------------

FoldOutcome train_fold(const Dataset& dataset, const FlatData& flat, const Fold& fold,
                       const ExperimentConfig& c, std::uint64_t seed, TeacherCache* cache) {
  const auto start = Clock::now();
  FoldOutcome out;
  out.fold_id = fold.fold_id;
  out.subject_id = fold.subject_id;
  const FoldData fd = normalize_features(flat, fold, c.standardize);
  const Modality tm = teacher_modality(c.direction), sm = student_modality(c.direction);
  const DistillMethod method = c.distill.lambda2 == 0.0 ? DistillMethod::None : c.distill.method;

  if (method != DistillMethod::None) {
    TeacherConfig tc = c.teacher;
    if (method != DistillMethod::Cmcrd) tc.lambda1 = 0.0;
    const NetworkSpec tspec = teacher_spec(c, dataset);
    const std::string key = hex64(fingerprint(dataset)) + "|" + to_string(c.protocol) + "|" +
                            std::to_string(fold.fold_id) + "|" + std::to_string(seed) + "|" +
                            teacher_config_hash(tspec, tc, tm) + "|" + format_double(c.val_fraction) + "|" +
                            std::to_string(c.train_trials) + "|" + (c.standardize ? "z" : "raw");
    out.teacher = cache ? cache->find(key) : nullptr;
    if (!out.teacher) {
      TeacherModel t = train_teacher(fd.train, fd.validation, tm, tspec, tc, derive_seed(seed, "teacher", fold.fold_id));
      t.dataset_fingerprint = fingerprint(dataset);
      out.teacher = cache ? cache->insert(key, std::move(t)) : std::make_shared<const TeacherModel>(std::move(t));
    }
    out.teacher_accuracy =
        score(predict_probs(out.teacher->spec, out.teacher->params, fd.test.features(tm)), fd.test, c.trial_vote);
  }

  DistillConfig dc = c.distill;
  dc.method = method;
  out.student = train_student(fd.train, fd.validation, sm, out.teacher ? *out.teacher : no_teacher(),
                              student_spec(c, dataset), dc, c.student, derive_seed(seed, "student", fold.fold_id));
  out.train_seconds = seconds_since(start);

  const auto test_start = Clock::now();
  out.test_probs = predict_probs(out.student.model.spec, out.student.model.params, fd.test.features(sm));
  out.test_seconds = seconds_since(test_start);
  out.accuracy = score(out.test_probs, fd.test, c.trial_vote);
  return out;
}

std::vector<RunResult> run_protocol(const Dataset& dataset, const ExperimentConfig& c, TeacherCache* cache) {
  validate(c);
  validate(dataset);
  const FlatData flat = flatten(dataset);
  const auto plans = plans_per_seed(dataset, c);
  auto [tasks, outcomes] = run_tasks(plans, c, [&](std::size_t s, const Fold& fold) {
    return train_fold(dataset, flat, fold, c, c.seeds[s], cache);
  });

  const std::string method = to_string(c.distill.lambda2 == 0.0 ? DistillMethod::None : c.distill.method);
  std::vector<RunResult> runs;
  for (std::size_t s = 0; s < c.seeds.size(); ++s) runs.push_back(result_shell(dataset, c, c.seeds[s], method));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    RunResult& r = runs[tasks[t].first];
    const FoldOutcome& o = outcomes[t];
    r.fold_ids.push_back(o.fold_id);
    r.subject_ids.push_back(o.subject_id);
    r.fold_accuracies.push_back(o.accuracy);
    if (o.teacher) r.teacher_accuracies.push_back(o.teacher_accuracy);
    r.negatives_used = std::max(r.negatives_used, o.student.negatives_used);
    r.negatives_clamped = r.negatives_clamped || o.student.negatives_clamped;
    for (const auto& e : o.student.trace) {
      r.positive_only_batches += e.positive_only;
      r.negative_only_batches += e.negative_only;
    }
    r.train_seconds += o.train_seconds;
    r.test_seconds += o.test_seconds;
  }
  for (auto& r : runs) r.finalize();

  if (c.traces && !c.out.empty()) {
    const std::filesystem::path dir = std::filesystem::path(c.out) / "traces";
    std::filesystem::create_directories(dir);
    for (std::size_t t = 0; t < tasks.size(); ++t)
      write_trace_jsonl(outcomes[t].student.trace,
                        dir / (method + "_" + to_string(c.protocol) + "_seed" + std::to_string(c.seeds[tasks[t].first]) +
                               "_fold" + std::to_string(outcomes[t].fold_id) + ".jsonl"));
  }
  return runs;
}

// ---------------------------------------------------------------------------

std::vector<int> fuse_predictions(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("fuse_predictions: probability shapes differ");
  Matrix avg(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) avg.data()[i] = 0.5 * a.data()[i] + 0.5 * b.data()[i];
  return argmax_rows(avg);
}

std::vector<RunResult> decision_fusion_eval(const Dataset& dataset, const ExperimentConfig& c, TeacherCache* cache) {
  validate(c);
  validate(dataset);
  const FlatData flat = flatten(dataset);
  const auto plans = plans_per_seed(dataset, c);

  struct FusionOutcome {
    int fold_id = 0, subject_id = 0;
    double accuracy = 0.0, train_seconds = 0.0, test_seconds = 0.0;
  };
  // Each unimodal model is the method-none run for its modality.
  ExperimentConfig eeg_cfg = c, em_cfg = c;
  eeg_cfg.distill.method = em_cfg.distill.method = DistillMethod::None;
  eeg_cfg.direction = Direction::EmToEeg;
  em_cfg.direction = Direction::EegToEm;
  em_cfg.arch = Family::Dnn;

  auto [tasks, outcomes] = run_tasks(plans, c, [&](std::size_t s, const Fold& fold) {
    const std::uint64_t seed = c.seeds[s];
    const FoldOutcome eeg = train_fold(dataset, flat, fold, eeg_cfg, seed, cache);
    const FoldOutcome em = train_fold(dataset, flat, fold, em_cfg, seed, cache);
    const FoldData fd = normalize_features(flat, fold, c.standardize);
    FusionOutcome o;
    o.fold_id = fold.fold_id;
    o.subject_id = fold.subject_id;
    o.train_seconds = eeg.train_seconds + em.train_seconds;
    const auto start = Clock::now();
    const Matrix pe = predict_probs(eeg.student.model.spec, eeg.student.model.params, fd.test.eeg);
    const Matrix pm = predict_probs(em.student.model.spec, em.student.model.params, fd.test.em);
    const std::vector<int> pred = fuse_predictions(pe, pm);
    o.test_seconds = seconds_since(start);
    Matrix onehot(pred.size(), pe.cols());
    for (std::size_t i = 0; i < pred.size(); ++i) onehot(i, static_cast<std::size_t>(pred[i])) = 1.0;
    o.accuracy = score(onehot, fd.test, c.trial_vote);
    return o;
  });

  std::vector<RunResult> runs;
  for (std::size_t s = 0; s < c.seeds.size(); ++s) runs.push_back(result_shell(dataset, c, c.seeds[s], "fusion"));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    RunResult& r = runs[tasks[t].first];
    r.direction = "both";
    r.fold_ids.push_back(outcomes[t].fold_id);
    r.subject_ids.push_back(outcomes[t].subject_id);
    r.fold_accuracies.push_back(outcomes[t].accuracy);
    r.train_seconds += outcomes[t].train_seconds;
    r.test_seconds += outcomes[t].test_seconds;
  }
  for (auto& r : runs) r.finalize();
  return runs;
}

// ---------------------------------------------------------------------------

std::string AblationCell::key() const {
  return std::string("mcc=") + (mcc ? "1" : "0") + ",us=" + (us ? "1" : "0") + ",iew=" + (iew ? "1" : "0");
}

ExperimentConfig ablation_config(const ExperimentConfig& c, bool mcc, bool us, bool iew) {
  ExperimentConfig cfg = c;
  const double lambda1 = c.teacher.lambda1 > 0.0 ? c.teacher.lambda1 : TeacherConfig{}.lambda1;
  cfg.distill.method = DistillMethod::Cmcrd;
  cfg.teacher.lambda1 = mcc ? lambda1 : 0.0;
  cfg.distill.us_enabled = us;
  cfg.distill.iew_enabled = iew;
  return cfg;
}

std::vector<AblationCell> run_ablation_grid(const Dataset& dataset, const ExperimentConfig& c, TeacherCache* cache) {
  validate(c);
  std::vector<AblationCell> cells;
  for (int bits = 0; bits < 8; ++bits) {
    AblationCell cell;
    cell.mcc = bits & 4;
    cell.us = bits & 2;
    cell.iew = bits & 1;
    try {
      cell.runs = run_protocol(dataset, ablation_config(c, cell.mcc, cell.us, cell.iew), cache);
      for (auto& r : cell.runs) {
        r.method = "ablation[" + cell.key() + "]";
        r.label = r.method;
      }
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

// ---------------------------------------------------------------------------

namespace {

// Fold id -> accuracy averaged over seeds.
std::map<int, double> per_fold_means(const std::vector<RunResult>& runs) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : runs)
    for (std::size_t i = 0; i < r.fold_ids.size(); ++i) {
      auto& slot = acc[r.fold_ids[i]];
      slot.first += r.fold_accuracies[i];
      ++slot.second;
    }
  std::map<int, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

}  // namespace

std::vector<StatReport> compare_runs(const std::vector<RunResult>& reference,
                                     const std::vector<std::vector<RunResult>>& others) {
  if (reference.empty()) throw InputError("compare: reference result set is empty");
  const auto ref = per_fold_means(reference);
  std::vector<StatReport> reports;
  std::vector<double> raw;
  for (const auto& other : others) {
    if (other.empty()) throw InputError("compare: empty result set");
    const auto cmp = per_fold_means(other);
    if (cmp.size() != ref.size())
      throw InputError("compare: fold counts differ (" + std::to_string(ref.size()) + " vs " +
                       std::to_string(cmp.size()) + ")");
    std::vector<double> a, b;
    for (const auto& [fold, acc] : ref) {
      auto it = cmp.find(fold);
      if (it == cmp.end()) throw InputError("compare: fold " + std::to_string(fold) + " missing from " + other[0].method);
      a.push_back(acc);
      b.push_back(it->second);
    }
    const TTestResult t = paired_ttest(a, b);
    StatReport rep;
    rep.method_a = reference[0].label.empty() ? reference[0].method : reference[0].label;
    rep.method_b = other[0].label.empty() ? other[0].method : other[0].label;
    rep.differences = t.differences;
    rep.raw_p = t.p;
    rep.degenerate = t.degenerate;
    raw.push_back(t.p);
    reports.push_back(std::move(rep));
  }
  const auto adj = bh_adjust(raw);
  for (std::size_t i = 0; i < reports.size(); ++i) reports[i].adjusted_p = adj[i];
  return reports;
}

// ---------------------------------------------------------------------------

std::vector<TimingRow> timing_report(const std::vector<RunResult>& runs) {
  std::vector<TimingRow> rows;
  std::vector<int> counts;
  for (const auto& r : runs) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const TimingRow& x) { return x.label == r.label && x.direction == r.direction; });
    if (it == rows.end()) {
      rows.push_back(TimingRow{r.label, r.direction, 0.0, 0.0});
      counts.push_back(0);
      it = rows.end() - 1;
    }
    const auto i = static_cast<std::size_t>(it - rows.begin());
    rows[i].train_seconds += r.train_seconds;
    rows[i].test_seconds += r.test_seconds;
    ++counts[i];
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].train_seconds /= counts[i];
    rows[i].test_seconds /= counts[i];
  }
  return rows;
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "model,direction,train_seconds,test_seconds\n";
  for (const auto& r : rows)
    out << r.label << ',' << r.direction << ',' << format_double(r.train_seconds) << ','
        << format_double(r.test_seconds) << '\n';
}

double time_inference(const NetworkSpec& spec, const ParamSet& params, const Matrix& x, std::size_t repetitions) {
  double best = INFINITY;
  for (std::size_t r = 0; r < std::max<std::size_t>(repetitions, 1); ++r) {
    const auto start = Clock::now();
    const Matrix p = predict_probs(spec, params, x);
    best = std::min(best, seconds_since(start));
    if (p.empty() && x.rows()) throw ShapeError("time_inference: empty output");
  }
  return best;
}

// ---------------------------------------------------------------------------

void export_features(const NetworkSpec& spec, const ParamSet& params, const SplitData& split, Modality modality,
                     const FlatData& flat, const std::filesystem::path& path) {
  const Matrix f = extract_features(spec, params, split.features(modality));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write feature dump " + path.string());
  out << "sample_id,subject,label";
  for (std::size_t j = 0; j < f.cols(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const std::size_t id = split.sample_ids[i];
    out << id << ',' << flat.subject[id] << ',' << split.labels[i];
    for (double v : f.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw LoadError("write failed: " + path.string());
}

void write_results_jsonl(const std::vector<RunResult>& runs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  for (const auto& r : runs) out << to_json(r).dump() << '\n';
  if (!out) throw LoadError("write failed: " + path.string());
}

std::vector<RunResult> read_results_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open results file " + path.string());
  std::vector<RunResult> runs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw InputError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON");
    runs.push_back(run_result_from_json(j));
  }
  return runs;
}

void write_summary_csv(const std::vector<RunResult>& runs, const std::filesystem::path& path) {
  std::vector<std::string> rows, cols;
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  for (const auto& r : runs) {
    const std::string col = r.dataset + "/" + r.arch + "/" + r.protocol + "/" + r.direction;
    if (std::find(rows.begin(), rows.end(), r.label) == rows.end()) rows.push_back(r.label);
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
    auto& v = cells[{r.label, col}];
    v.insert(v.end(), r.fold_accuracies.begin(), r.fold_accuracies.end());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "method";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  char buf[64];
  for (const auto& row : rows) {
    out << row;
    for (const auto& col : cols) {
      out << ',';
      auto it = cells.find({row, col});
      if (it == cells.end()) continue;
      RunResult tmp;
      tmp.fold_accuracies = it->second;
      tmp.finalize();
      std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * tmp.mean, 100.0 * tmp.std);
      out << buf;
    }
    out << '\n';
  }
}

std::string method_label(const std::string& method, Direction d) {
  const std::string student = d == Direction::EmToEeg ? "EEG" : "EM";
  if (method == "none") return student;
  if (method == "fusion") return "EM + EEG";
  static const std::map<std::string, std::string> names = {
      {"cmcrd", "CMCRD"}, {"crd", "CRD"}, {"kd", "KD"},   {"fitnet", "FitNet"},
      {"nst", "NST"},     {"sp", "SP"},   {"rkd", "RKD"}, {"pkt", "PKT"}};
  auto it = names.find(method);
  return it == names.end() ? method : it->second;
}

}  // namespace cmcrd
