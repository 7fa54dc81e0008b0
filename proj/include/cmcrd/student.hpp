#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cmcrd/distill.hpp"
#include "cmcrd/splits.hpp"
#include "cmcrd/teacher.hpp"

namespace cmcrd {

enum class DistillMethod { Cmcrd, Crd, Kd, FitNet, Nst, Sp, Rkd, Pkt, None };

const char* to_string(DistillMethod m);
DistillMethod parse_distill_method(const std::string& s);
std::vector<std::string> distill_method_names();

struct DistillConfig {
  DistillMethod method = DistillMethod::Cmcrd;
  double lambda2 = 0.02;
  bool us_enabled = true;   // split the batch by teacher correctness
  bool iew_enabled = true;  // certainty weights from the teacher's entropies
  CmcrdForm form = CmcrdForm::Literal;
  double tau = 0.07;
  std::size_t negatives = 4096;  // requested N; clamped to the bank's class pools
  double bank_momentum = 0.5;
  double kd_temperature = 4.0;
  int hint_layer = -1;  // extractor layer for FitNet/NST/SP; -1 = feature layer
  double rkd_distance_weight = 1.0;
  double rkd_angle_weight = 2.0;
};

struct StudentConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
};

struct StudentEpoch {
  std::size_t epoch = 0;
  double ce_loss = 0.0;
  double distill_loss = 0.0;
  std::size_t positive_only = 0;  // batches where the literal form used only P
  std::size_t negative_only = 0;  // batches where it used only Nbar
  double train_acc = 0.0;
  double val_acc = -1.0;
  double mi_bound = 0.0;  // mean of log N + objective over batches (contrastive methods)
};

struct StudentModel {
  Modality modality = Modality::Eeg;
  NetworkSpec spec;
  ParamSet params;
  ParamSet distiller;  // "embed.*" critic map or "fitnet.*" regressor
};

struct StudentRun {
  StudentModel model;
  std::vector<StudentEpoch> trace;
  std::size_t negatives_used = 0;
  bool negatives_clamped = false;
};

/// Trains h^s/g^s on `modality` with cross-entropy + lambda2 * distillation
/// against the frozen teacher. Teacher outputs are taken on the paired
/// guiding-modality samples of the same split. With lambda2 = 0 or method
/// None the run is plain cross-entropy training.
StudentRun train_student(const SplitData& train, const SplitData& validation, Modality modality,
                         const TeacherModel& teacher, const NetworkSpec& spec,
                         const DistillConfig& distill, const StudentConfig& config, std::uint64_t seed);

/// One JSON object per epoch.
void write_trace_jsonl(const std::vector<StudentEpoch>& trace, const std::filesystem::path& path);

}  // namespace cmcrd
