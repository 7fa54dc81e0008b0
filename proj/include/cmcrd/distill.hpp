#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cmcrd/matrix.hpp"
#include "cmcrd/nets.hpp"

namespace cmcrd {

// ---------------------------------------------------------------------------
// Guided distillation loss

enum class CmcrdForm { Literal, Surrogate };

const char* to_string(CmcrdForm f);
CmcrdForm parse_cmcrd_form(const std::string& s);

/// Batch positions the teacher classifies correctly (positive) or not.
struct GuidanceSets {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};

GuidanceSets build_guidance_sets(const Matrix& teacher_logits, std::span<const int> labels);
/// Every position positive; used when the undesired-sample split is off.
GuidanceSets all_positive(std::size_t n);

struct CmcrdResult {
  double loss = 0.0;
  std::vector<double> d_per_sample;  // d loss / d L_i
  bool positive_only = false;        // negative set empty, literal form fell back
  bool negative_only = false;        // positive set empty, literal form fell back
};

/// Literal:   -log( |sum_P W_i L_i / tau| / |sum_Nbar W_i L_i / tau| )
/// Surrogate: (1/n) [ -sum_P W_i L_i / tau + sum_Nbar W_i L_i / tau ]
/// The literal form falls back to the matching surrogate term when either
/// set is empty. Both absolute values are guarded with 1e-12.
CmcrdResult cmcrd_loss(std::span<const double> per_sample, std::span<const double> weights,
                       const GuidanceSets& sets, double tau, CmcrdForm form);

// ---------------------------------------------------------------------------
// Baseline losses. Each returns the loss and writes d loss / d student input
// into `d_student` (same shape as the student input).

/// T^2 * mean_i KL(softmax(t_i/T) || softmax(s_i/T)).
double kd_loss(const Matrix& teacher_logits, const Matrix& student_logits, double temperature,
               Matrix* d_student);

/// Mean squared error between a trainable linear regression of the student
/// hint ("fitnet.weight", "fitnet.bias") and the teacher hint.
double fitnet_loss(const Matrix& teacher_hint, const Matrix& student_hint, const ParamSet& regressor,
                   Matrix* d_student, ParamSet* d_regressor);

/// Squared MMD with polynomial kernel (x.y)^2 between the sets of neuron
/// activation patterns, each neuron's column normalised across the batch.
double nst_loss(const Matrix& teacher_hint, const Matrix& student_hint, Matrix* d_student);

/// (1/n^2) ||G_t - G_s||_F^2 on row-normalised batch Gram matrices.
double sp_loss(const Matrix& teacher_hint, const Matrix& student_hint, Matrix* d_student);

/// Huber losses on mean-normalised pairwise distances and on triplet angles.
double rkd_loss(const Matrix& teacher_features, const Matrix& student_features,
                double distance_weight, double angle_weight, Matrix* d_student);

/// KL between cosine-kernel conditional probability distributions.
double pkt_loss(const Matrix& teacher_features, const Matrix& student_features, Matrix* d_student);

}  // namespace cmcrd
