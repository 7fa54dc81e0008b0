#include "cmcrd/critic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"

namespace cmcrd {

namespace {

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double CriticScale::logit(double u) const {
  return u / tau - std::log(static_cast<double>(negatives) / static_cast<double>(slots));
}

double critic_score(double u, const CriticScale& s) { return sigmoid(s.logit(u)); }
double critic_log_score(double u, const CriticScale& s) { return -softplus(-s.logit(u)); }
double critic_log_complement(double u, const CriticScale& s) { return -softplus(s.logit(u)); }

Matrix normalize_rows(const Matrix& x, std::vector<double>* norms) {
  Matrix out(x.rows(), x.cols());
  if (norms) norms->assign(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double n2 = 0.0;
    for (double v : x.row(i)) n2 += v * v;
    const double n = std::sqrt(n2);
    if (norms) (*norms)[i] = n;
    if (n < 1e-12) continue;
    auto src = x.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / n;
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& y, std::span<const double> norms, const Matrix& dy) {
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    if (norms[i] < 1e-12) continue;
    double inner = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) inner += y(i, j) * dy(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = (dy(i, j) - y(i, j) * inner) / norms[i];
  }
  return dx;
}

// ---------------------------------------------------------------------------

MemoryBank::MemoryBank(Matrix teacher, Matrix student, std::vector<int> labels, double momentum)
    : teacher_(normalize_rows(teacher)),
      student_(normalize_rows(student)),
      labels_(std::move(labels)),
      momentum_(momentum) {
  if (teacher_.rows() != labels_.size() || student_.rows() != labels_.size())
    throw ShapeError("MemoryBank: slot count mismatch");
  if (teacher_.cols() != student_.cols()) throw ShapeError("MemoryBank: embedding widths differ");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("MemoryBank: momentum must lie in [0, 1)");
  int max_label = -1;
  for (int l : labels_) max_label = std::max(max_label, l);
  complement_.resize(static_cast<std::size_t>(max_label + 1));
  for (std::size_t c = 0; c < complement_.size(); ++c)
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] != static_cast<int>(c)) complement_[c].push_back(i);
}

std::size_t MemoryBank::max_negatives() const noexcept {
  std::size_t best = labels_.size();
  std::vector<bool> present(complement_.size(), false);
  for (int l : labels_) present[static_cast<std::size_t>(l)] = true;
  for (std::size_t c = 0; c < complement_.size(); ++c)
    if (present[c]) best = std::min(best, complement_[c].size());
  return best;
}

std::vector<std::size_t> MemoryBank::sample_negatives(int anchor_label, std::size_t count,
                                                      std::mt19937_64& rng) const {
  static const std::vector<std::size_t> kEmpty;
  const auto& pool = anchor_label >= 0 && static_cast<std::size_t>(anchor_label) < complement_.size()
                         ? complement_[static_cast<std::size_t>(anchor_label)]
                         : kEmpty;
  if (count > pool.size())
    throw SamplingError("requested " + std::to_string(count) + " negatives for class " +
                        std::to_string(anchor_label) + " but only " + std::to_string(pool.size()) +
                        " different-class slots exist; use a smaller N");
  std::vector<std::size_t> work(pool);
  // Partial Fisher-Yates: the first `count` entries become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, work.size() - 1);
    std::swap(work[i], work[pick(rng)]);
  }
  work.resize(count);
  return work;
}

void MemoryBank::update(std::span<const std::size_t> slots, const Matrix& t, const Matrix& s) {
  for (std::size_t b = 0; b < slots.size(); ++b) {
    for (Matrix* bank : {&teacher_, &student_}) {
      const Matrix& fresh = bank == &teacher_ ? t : s;
      auto row = bank->row(slots[b]);
      double n2 = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = momentum_ * row[j] + (1.0 - momentum_) * fresh(b, j);
        n2 += row[j] * row[j];
      }
      const double n = std::sqrt(n2);
      if (n > 1e-12)
        for (double& v : row) v /= n;
    }
  }
}

// ---------------------------------------------------------------------------

ContrastTerms contrast_objective(const Matrix& t, const Matrix& s, const MemoryBank& bank,
                                 const std::vector<std::vector<std::size_t>>& negatives,
                                 const CriticScale& scale) {
  const std::size_t n = s.rows();
  if (t.rows() != n || negatives.size() != n) throw ShapeError("contrast_objective: batch size mismatch");
  if (!(scale.tau > 0.0)) throw DomainError("contrast_objective: tau must be > 0");
  const std::size_t count = scale.negatives;
  for (const auto& neg : negatives)
    if (neg.size() != count) throw ShapeError("contrast_objective: negatives per anchor != N");

  // Scores against every slot at once; sampled entries are picked below.
  const Matrix s_vs_bank = kernels::matmul(s, bank.teacher(), kernels::Trans::No, kernels::Trans::Yes);
  const Matrix t_vs_bank = kernels::matmul(t, bank.student(), kernels::Trans::No, kernels::Trans::Yes);

  ContrastTerms out;
  out.per_sample.resize(n);
  out.positive_k.resize(n);
  out.student_anchor_k = Matrix(n, count);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double u = 0.0;
    for (std::size_t j = 0; j < t.cols(); ++j) u += t(i, j) * s(i, j);
    double li = critic_log_score(u, scale);
    out.positive_k[i] = critic_score(u, scale);
    for (std::size_t q = 0; q < count; ++q) {
      const std::size_t slot = negatives[i][q];
      const double u_s = s_vs_bank(i, slot);
      const double u_t = t_vs_bank(i, slot);
      li += 0.5 * (critic_log_complement(u_s, scale) + critic_log_complement(u_t, scale));
      out.student_anchor_k(i, q) = critic_score(u_s, scale);
    }
    out.per_sample[i] = li;
    total += li;
  }
  out.objective = n ? total / static_cast<double>(n) : 0.0;
  out.bound = std::log(static_cast<double>(count)) + out.objective;
  return out;
}

Matrix contrast_backward(const Matrix& t, const MemoryBank& bank,
                         const std::vector<std::vector<std::size_t>>& negatives,
                         const ContrastTerms& terms, const CriticScale& scale,
                         std::span<const double> upstream) {
  const std::size_t n = t.rows();
  // coeff(i, slot): weight of tbank_slot in dL_i/ds_i.
  Matrix coeff(n, bank.size());
  Matrix ds(n, t.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const double g = upstream[i];
    if (g == 0.0) continue;
    // d log k / du = (1 - k)/tau ; d log(1 - k)/du = -k/tau
    const double pos = g * (1.0 - terms.positive_k[i]) / scale.tau;
    for (std::size_t j = 0; j < t.cols(); ++j) ds(i, j) = pos * t(i, j);
    for (std::size_t q = 0; q < negatives[i].size(); ++q)
      coeff(i, negatives[i][q]) += -0.5 * g * terms.student_anchor_k(i, q) / scale.tau;
  }
  kernels::gemm(kernels::Trans::No, kernels::Trans::No, 1.0, coeff, bank.teacher(), 1.0, ds);
  return ds;
}

}  // namespace cmcrd
