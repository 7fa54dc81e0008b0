#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmcrd/experiment.hpp"
#include "cmcrd/stats.hpp"

namespace cmcrd {

/// One (protocol, method, seed) cell: per-fold accuracies plus diagnostics.
struct RunResult {
  std::string protocol;
  std::string method;  // "cmcrd", "none", "fusion", "ablation[mcc=1,us=0,iew=1]", ...
  std::string label;   // report label, e.g. "EEG", "EM + EEG", "CMCRD"
  std::string direction;
  std::string arch;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<int> fold_ids;
  std::vector<int> subject_ids;
  std::vector<double> fold_accuracies;
  std::vector<double> teacher_accuracies;  // empty for runs without a teacher
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1), 0 for a single fold
  std::size_t negatives_used = 0;
  bool negatives_clamped = false;
  std::size_t positive_only_batches = 0;
  std::size_t negative_only_batches = 0;
  double train_seconds = 0.0;  // wall-clock
  double test_seconds = 0.0;   // wall-clock

  void finalize();  // recomputes mean/std from fold_accuracies
};

nlohmann::json to_json(const RunResult& r);
RunResult run_result_from_json(const nlohmann::json& j);

/// Thread-safe store of trained teachers keyed by everything that determines
/// them, so arms sharing a teacher train it once.
class TeacherCache {
 public:
  std::shared_ptr<const TeacherModel> find(const std::string& key) const;
  std::shared_ptr<const TeacherModel> insert(const std::string& key, TeacherModel model);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const TeacherModel>> store_;
};

/// Everything one fold produces.
struct FoldOutcome {
  int fold_id = 0;
  int subject_id = 0;
  std::shared_ptr<const TeacherModel> teacher;  // null for method none
  StudentRun student;
  Matrix test_probs;
  double accuracy = 0.0;
  double teacher_accuracy = -1.0;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
};

/// Standardizes with train statistics, trains the teacher (or takes it from
/// `cache`), trains the student and scores it on the test split with the
/// student modality only.
FoldOutcome train_fold(const Dataset& dataset, const FlatData& flat, const Fold& fold,
                       const ExperimentConfig& config, std::uint64_t seed, TeacherCache* cache = nullptr);

/// One RunResult per seed; folds execute in parallel (config.jobs workers).
/// Errors are rethrown annotated with fold id and seed.
std::vector<RunResult> run_protocol(const Dataset& dataset, const ExperimentConfig& config,
                                    TeacherCache* cache = nullptr);

/// Two unimodal models per fold (EEG and EM, plain cross-entropy); the test
/// prediction averages their probabilities 0.5/0.5, ties to the lower class.
std::vector<RunResult> decision_fusion_eval(const Dataset& dataset, const ExperimentConfig& config,
                                            TeacherCache* cache = nullptr);

/// Averages two probability matrices and takes the row argmax.
std::vector<int> fuse_predictions(const Matrix& a, const Matrix& b);

struct AblationCell {
  bool mcc = false;
  bool us = false;
  bool iew = false;
  std::vector<RunResult> runs;  // one per seed
  std::string error;            // non-empty when the cell failed
  std::string key() const;      // "mcc=1,us=0,iew=1"
};

/// The CMCRD configuration of one ablation cell; a disabled MCC module
/// trains the teacher with lambda1 = 0.
ExperimentConfig ablation_config(const ExperimentConfig& config, bool mcc, bool us, bool iew);

/// All 2^3 (MCC, US, IEW) combinations of the CMCRD method, ordered
/// (0,0,0), (0,0,1), ..., (1,1,1). A failing cell records its error and the
/// remaining cells still run.
std::vector<AblationCell> run_ablation_grid(const Dataset& dataset, const ExperimentConfig& config,
                                            TeacherCache* cache = nullptr);

/// Paired comparison of `reference` against each entry of `others`, pairing
/// fold accuracies averaged over seeds by fold id; all raw p-values are
/// jointly BH-adjusted. Throws InputError when fold sets differ.
std::vector<StatReport> compare_runs(const std::vector<RunResult>& reference,
                                     const std::vector<std::vector<RunResult>>& others);

struct TimingRow {
  std::string label;
  std::string direction;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
};

/// Per-model mean train/test seconds over the given runs, grouped by label
/// and direction in first-seen order.
std::vector<TimingRow> timing_report(const std::vector<RunResult>& runs);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path);

/// Minimum over `repetitions` of the wall-clock time of a forward pass over
/// `x`, in seconds.
double time_inference(const NetworkSpec& spec, const ParamSet& params, const Matrix& x,
                      std::size_t repetitions = 3);

/// CSV: sample_id,subject,label,f0..f{d-1}; features from the extractor h.
void export_features(const NetworkSpec& spec, const ParamSet& params, const SplitData& split,
                     Modality modality, const FlatData& flat, const std::filesystem::path& path);

void write_results_jsonl(const std::vector<RunResult>& runs, const std::filesystem::path& path);
std::vector<RunResult> read_results_jsonl(const std::filesystem::path& path);
/// Rows = method labels, columns = dataset/arch/protocol/direction, cells
/// "mean±std" of fold accuracies in percent pooled over seeds.
void write_summary_csv(const std::vector<RunResult>& runs, const std::filesystem::path& path);

/// Human label used in reports for a method name.
std::string method_label(const std::string& method, Direction direction);

}  // namespace cmcrd
