#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cmcrd/matrix.hpp"
#include "cmcrd/nets.hpp"

namespace cmcrd {

/// Shuffled mini-batches of [0, n). The final batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::mt19937_64& rng);

/// Forward pass over `x` in chunks; returns class probabilities.
Matrix predict_probs(const NetworkSpec& spec, const ParamSet& params, const Matrix& x,
                     std::size_t chunk = 256);

/// Forward pass over `x` in chunks; returns the extractor features.
Matrix extract_features(const NetworkSpec& spec, const ParamSet& params, const Matrix& x,
                        std::size_t chunk = 256);

/// Row argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const Matrix& probs);

/// Fraction of rows whose argmax matches the label.
double accuracy(const Matrix& probs, std::span<const int> labels);

/// Accuracy after a majority vote over the summed probabilities of each
/// trial (`trial_keys` groups rows); every sample of a trial is scored with
/// the trial's vote.
double trial_vote_accuracy(const Matrix& probs, std::span<const int> labels,
                           std::span<const int> trial_keys);

std::vector<int> gather(std::span<const int> values, std::span<const std::size_t> idx);

}  // namespace cmcrd
