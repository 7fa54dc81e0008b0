#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmcrd/matrix.hpp"

namespace cmcrd {

/// Guard used in logs and row normalisations of the confusion terms.
inline constexpr double kMccEpsilon = 1e-12;

/// Shannon entropy in nats, with 0 log 0 = 0. Throws DomainError on a
/// negative component or a vector that is off the simplex by more than 1e-6.
double entropy(std::span<const double> probs);

/// Per-sample certainty weights: W_ii = n (1 + e^{-H_i}) / sum_j (1 + e^{-H_j}).
/// They sum to n.
std::vector<double> mcc_weights(const Matrix& probs);

struct MccTerms {
  std::vector<double> entropy;
  std::vector<double> weights;
  Matrix confusion;   // C = P^T W P
  Matrix normalized;  // rows of C scaled to sum to one
  double loss = 0.0;  // (1/c) * off-diagonal mass of the normalised confusion
  std::size_t guarded_rows = 0;  // rows of C with zero mass, replaced by uniform
};

/// Minimum-class-confusion terms for a batch of probability rows (n x c).
MccTerms mcc_loss(const Matrix& probs);

/// d loss / d probs for the terms computed by mcc_loss on the same batch.
/// Includes the dependence of the weights on the entropies.
Matrix mcc_loss_grad(const Matrix& probs, const MccTerms& terms);

/// Mean cross-entropy of softmax(logits) against labels. When `grad` is
/// given it receives d loss / d logits = (softmax - onehot) / n.
double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad = nullptr);

/// Back-propagates dP through P = softmax(logits / temperature).
Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs, double temperature);

struct TeacherLoss {
  double total = 0.0;
  double cross_entropy = 0.0;
  double mcc = 0.0;
};

/// Cross-entropy on the raw logits plus lambda1 times the MCC loss of the
/// temperature-softened probabilities.
TeacherLoss teacher_loss(const Matrix& logits, std::span<const int> labels, double lambda1,
                         double temperature, Matrix* d_logits = nullptr);

}  // namespace cmcrd
