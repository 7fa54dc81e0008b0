#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmcrd/matrix.hpp"

namespace cmcrd {

using FeatureMatrix = Matrix;

enum class Modality { Eeg, Em };

const char* to_string(Modality m);

struct Trial {
  int trial_id = 0;
  int label = 0;
  FeatureMatrix eeg;
  FeatureMatrix em;

  std::size_t sample_count() const noexcept { return eeg.rows(); }
};

struct SessionRecord {
  int subject_id = 0;
  int session_id = 0;
  std::vector<Trial> trials;
};

/// Paired two-modality dataset organised subject -> session -> trial.
/// Treated as immutable once validated.
struct Dataset {
  std::string name;
  int num_classes = 0;
  std::size_t eeg_dim = 0;
  std::size_t em_dim = 0;
  std::size_t trials_per_session = 0;
  std::vector<SessionRecord> sessions;

  std::size_t sample_count() const;
  std::vector<int> subject_ids() const;
};

/// Throws SchemaError / PairingError on the first violated invariant.
void validate(const Dataset& dataset);

/// Flat, sample-indexed view of a dataset. Sample i is the i-th row when
/// iterating sessions, then trials, then rows, in stored order.
struct FlatData {
  int num_classes = 0;
  Matrix eeg;
  Matrix em;
  std::vector<int> labels;
  std::vector<int> subject;
  std::vector<int> session;
  std::vector<int> trial;

  std::size_t size() const noexcept { return labels.size(); }
  const Matrix& features(Modality m) const { return m == Modality::Eeg ? eeg : em; }
};

FlatData flatten(const Dataset& dataset);

/// Order-sensitive 64-bit fingerprint of the dataset contents.
std::uint64_t fingerprint(const Dataset& dataset);

// ---------------------------------------------------------------------------
// On-disk layout: <root>/manifest.json plus, per session,
// eeg_<subj>_<sess>.csv, em_<subj>_<sess>.csv, labels_<subj>_<sess>.csv.

Dataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t num_subjects = 20;
  std::size_t sessions_per_subject = 3;
  std::size_t trials_per_session = 15;
  std::size_t samples_per_trial = 8;
  int num_classes = 5;
  std::size_t eeg_dim = 310;
  std::size_t em_dim = 33;
  std::size_t latent_dim = 16;
  double cross_modal_coupling = 0.8;
  double class_separation = 2.0;
  double subject_shift_scale = 0.5;
  double noise_scale = 1.0;     // EEG feature noise
  double em_noise_scale = 1.0;  // EM feature noise
  double expression_rate = 1.0; // share of samples that carry their trial's class signal
  std::uint64_t seed = 0;
  std::string name = "synthetic";
};

void validate(const SynthSpec& spec);

Dataset generate_synthetic(const SynthSpec& spec);

/// Named generator presets: seed-like, seediv-like, seedv-like, bench.
std::optional<SynthSpec> synth_preset(const std::string& name);
std::vector<std::string> synth_preset_names();

}  // namespace cmcrd
