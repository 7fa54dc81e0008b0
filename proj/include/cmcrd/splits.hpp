#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmcrd/data.hpp"

namespace cmcrd {

enum class Protocol { WithinSubject, CrossSubject };

const char* to_string(Protocol p);
Protocol parse_protocol(const std::string& s);

/// Sample indices refer to rows of flatten(dataset).
struct Fold {
  int fold_id = 0;
  int subject_id = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> validation;
};

struct SplitPlan {
  Protocol protocol = Protocol::WithinSubject;
  std::vector<Fold> folds;
};

/// Number of leading trials per session used for training in the
/// within-subject protocol: 9 / 16 / 10 for 3 / 4 / 5 classes.
std::optional<std::size_t> default_within_train_trials(int num_classes);

/// One fold per subject: the first `train_trials` trials of each of that
/// subject's sessions train, the remaining trials test. When `train_trials`
/// is not given, the per-family default is used.
SplitPlan make_within_subject_splits(const Dataset& dataset,
                                     std::optional<std::size_t> train_trials = std::nullopt);

/// Leave-one-subject-out. The held-out subject is the test set; the other
/// subjects' samples are split into train / validation at the sample level
/// by `val_fraction`, shuffled with `seed`.
SplitPlan make_cross_subject_splits(const Dataset& dataset, double val_fraction = 0.1,
                                    std::uint64_t seed = 0);

SplitPlan make_splits(const Dataset& dataset, Protocol protocol, double val_fraction,
                      std::uint64_t seed, std::optional<std::size_t> train_trials = std::nullopt);

// ---------------------------------------------------------------------------

/// Per-feature z-score statistics. Features whose training variance is zero
/// map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1/std, or 0 for constant columns

  static Standardizer fit(const Matrix& features, const std::vector<std::size_t>& rows);
  /// Applies the stored statistics; applying twice standardizes twice.
  Matrix apply(const Matrix& features) const;
};

/// One split's worth of standardized samples, both modalities.
struct SplitData {
  Matrix eeg;
  Matrix em;
  std::vector<int> labels;
  std::vector<std::size_t> sample_ids;  // rows of the flat dataset
  std::vector<int> trial_keys;          // unique per (subject, session, trial)

  std::size_t size() const noexcept { return labels.size(); }
  const Matrix& features(Modality m) const { return m == Modality::Eeg ? eeg : em; }
};

struct FoldData {
  int fold_id = 0;
  int num_classes = 0;
  SplitData train;
  SplitData validation;
  SplitData test;
  Standardizer eeg_stats;
  Standardizer em_stats;
};

/// Builds standardized train / validation / test views. Statistics come from
/// the training rows only.
FoldData normalize_features(const FlatData& data, const Fold& fold, bool standardize = true);

}  // namespace cmcrd
