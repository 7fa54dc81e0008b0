#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cmcrd/matrix.hpp"

namespace cmcrd {

// ---------------------------------------------------------------------------
// Critic score
//
//   k(u) = e^{u/tau} / (e^{u/tau} + N/M) = sigmoid(u/tau - log(N/M))
//
// where u is the inner product of the two unit-norm embeddings, N the number
// of negatives per anchor and M the number of memory slots.

struct CriticScale {
  double tau = 0.07;
  std::size_t negatives = 1;  // N
  std::size_t slots = 1;      // M

  double logit(double u) const;  // u/tau - log(N/M)
};

double critic_score(double u, const CriticScale& scale);
double critic_log_score(double u, const CriticScale& scale);       // log k
double critic_log_complement(double u, const CriticScale& scale);  // log(1 - k)

/// L2-normalises each row; rows with norm below 1e-12 become zero. `norms`
/// receives the pre-normalisation norms.
Matrix normalize_rows(const Matrix& x, std::vector<double>* norms = nullptr);
/// Back-propagates through normalize_rows.
Matrix normalize_rows_backward(const Matrix& normalized, std::span<const double> norms,
                               const Matrix& d_normalized);

// ---------------------------------------------------------------------------

/// Per-modality store of unit-norm embeddings, one slot per training sample.
/// Slot i always holds sample i of the training split.
class MemoryBank {
 public:
  MemoryBank(Matrix teacher, Matrix student, std::vector<int> labels, double momentum);

  std::size_t size() const noexcept { return labels_.size(); }
  const Matrix& teacher() const noexcept { return teacher_; }
  const Matrix& student() const noexcept { return student_; }
  std::span<const int> labels() const noexcept { return labels_; }
  double momentum() const noexcept { return momentum_; }

  /// Largest N for which every anchor class has N different-class slots.
  std::size_t max_negatives() const noexcept;

  /// Draws `count` distinct slots whose label differs from `anchor_label`.
  /// Throws SamplingError when the class-complement pool is too small.
  std::vector<std::size_t> sample_negatives(int anchor_label, std::size_t count,
                                            std::mt19937_64& rng) const;

  /// v <- normalize(momentum * v + (1 - momentum) * new) for each listed slot.
  void update(std::span<const std::size_t> slots, const Matrix& teacher_embed,
              const Matrix& student_embed);

 private:
  Matrix teacher_;
  Matrix student_;
  std::vector<int> labels_;
  double momentum_;
  std::vector<std::vector<std::size_t>> complement_;  // per class: slots of other classes
};

// ---------------------------------------------------------------------------
// Contrastive objective
//
// For anchor i with positive pair (t_i, s_i) and sampled different-class
// slots j:
//
//   L_i = log k(t_i . s_i)
//         + sum_j 1/2 [ log(1 - k(tbank_j . s_i)) + log(1 - k(t_i . sbank_j)) ]
//
// i.e. each negative contributes the average over the two anchor
// directions. Gradients flow into s_i only; bank entries and the frozen
// teacher embeddings are constants.

struct ContrastTerms {
  std::vector<double> per_sample;  // L_i
  double objective = 0.0;          // mean L_i (<= 0)
  double bound = 0.0;              // log N + objective
  std::vector<double> positive_k;
  Matrix student_anchor_k;  // n x N, k(tbank_j . s_i) per sampled negative
};

ContrastTerms contrast_objective(const Matrix& teacher_embed, const Matrix& student_embed,
                                 const MemoryBank& bank,
                                 const std::vector<std::vector<std::size_t>>& negatives,
                                 const CriticScale& scale);

/// d loss / d student_embed given d loss / d L_i in `upstream`.
Matrix contrast_backward(const Matrix& teacher_embed, const MemoryBank& bank,
                         const std::vector<std::vector<std::size_t>>& negatives,
                         const ContrastTerms& terms, const CriticScale& scale,
                         std::span<const double> upstream);

}  // namespace cmcrd
