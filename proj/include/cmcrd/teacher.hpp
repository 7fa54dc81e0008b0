#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cmcrd/data.hpp"
#include "cmcrd/nets.hpp"
#include "cmcrd/splits.hpp"

namespace cmcrd {

struct TeacherConfig {
  double lambda1 = 0.1;
  double temperature = 2.0;  // softening applied before the MCC terms
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::size_t embed_dim = 128;  // output width of the critic-side map
  OptimizerConfig optimizer;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double ce_loss = 0.0;
  double aux_loss = 0.0;  // MCC for teachers, distillation term for students
  double train_acc = 0.0;
  double val_acc = -1.0;  // -1 when there is no validation split
};

/// Frozen guiding-modality model. `embed` holds the teacher side of the
/// critic ("embed.weight", "embed.bias"), fixed at construction.
struct TeacherModel {
  Modality modality = Modality::Em;
  NetworkSpec spec;
  ParamSet params;
  ParamSet embed;
  double lambda1 = 0.1;
  double temperature = 2.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::uint64_t dataset_fingerprint = 0;
  std::vector<EpochRecord> trace;
};

/// Hash of everything that determines a trained teacher apart from data and seed.
std::string teacher_config_hash(const NetworkSpec& spec, const TeacherConfig& config, Modality modality);

/// Trains h^t/g^t on `modality` of the training split, minimising
/// cross-entropy + lambda1 * MCC per mini-batch. When the validation split
/// is non-empty, the parameters with the best validation accuracy are kept.
/// Throws TrainingError with epoch/batch provenance on a non-finite loss.
TeacherModel train_teacher(const SplitData& train, const SplitData& validation, Modality modality,
                           const NetworkSpec& spec, const TeacherConfig& config, std::uint64_t seed);

/// Sets the critic bias so training features map to zero-mean embeddings.
void center_embedding(TeacherModel& teacher, const Matrix& train_features);

/// Writes <stem>.params.json (parameter checkpoint, critic map prefixed
/// "critic.") and <stem>.teacher.json (lambda1, temperature, seed, spec,
/// dataset fingerprint).
void save_teacher(const TeacherModel& teacher, const std::filesystem::path& stem);
TeacherModel load_teacher(const std::filesystem::path& stem);

}  // namespace cmcrd
