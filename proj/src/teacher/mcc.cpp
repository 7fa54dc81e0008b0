#include "cmcrd/mcc.hpp"

#include <cmath>
#include <string>

#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"

namespace cmcrd {

double entropy(std::span<const double> probs) {
  double total = 0.0;
  double h = 0.0;
  for (double p : probs) {
    if (p < 0.0 || !std::isfinite(p)) throw DomainError("entropy: invalid probability " + std::to_string(p));
    total += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("entropy: probabilities sum to " + std::to_string(total));
  return h;
}

std::vector<double> mcc_weights(const Matrix& probs) {
  const std::size_t n = probs.rows();
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 1.0 + std::exp(-entropy(probs.row(i)));
    total += w[i];
  }
  for (double& v : w) v *= static_cast<double>(n) / total;
  return w;
}

MccTerms mcc_loss(const Matrix& probs) {
  const std::size_t n = probs.rows(), c = probs.cols();
  if (c < 2) throw DomainError("mcc_loss: needs at least two classes");
  MccTerms t;
  t.entropy.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.entropy[i] = entropy(probs.row(i));
  t.weights = mcc_weights(probs);

  Matrix weighted = probs;
  for (std::size_t i = 0; i < n; ++i)
    for (double& v : weighted.row(i)) v *= t.weights[i];
  t.confusion = kernels::matmul(probs, weighted, kernels::Trans::Yes, kernels::Trans::No);

  t.normalized = Matrix(c, c);
  double off_diagonal = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    double row_sum = 0.0;
    for (double v : t.confusion.row(i)) row_sum += v;
    for (std::size_t j = 0; j < c; ++j) {
      t.normalized(i, j) = row_sum > kMccEpsilon ? t.confusion(i, j) / row_sum : 1.0 / static_cast<double>(c);
      if (j != i) off_diagonal += std::abs(t.normalized(i, j));
    }
    if (!(row_sum > kMccEpsilon)) ++t.guarded_rows;
  }
  t.loss = off_diagonal / static_cast<double>(c);
  return t;
}

Matrix mcc_loss_grad(const Matrix& probs, const MccTerms& t) {
  const std::size_t n = probs.rows(), c = probs.cols();
  const double inv_c = 1.0 / static_cast<double>(c);

  // d loss / d C. Entries of C are non-negative so |.| is the identity here.
  Matrix d_conf(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    double row_sum = 0.0;
    for (double v : t.confusion.row(i)) row_sum += v;
    if (!(row_sum > kMccEpsilon)) continue;  // guarded row is constant
    // d/dC_ik of sum_{j != i} C_ij / R_i
    const double off = row_sum - t.confusion(i, i);
    for (std::size_t k = 0; k < c; ++k) {
      const double direct = k == i ? 0.0 : 1.0 / row_sum;
      d_conf(i, k) = inv_c * (direct - off / (row_sum * row_sum));
    }
  }

  // C = P^T diag(w) P
  Matrix sym(c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) sym(i, j) = d_conf(i, j) + d_conf(j, i);
  Matrix d_probs = kernels::matmul(probs, sym);
  std::vector<double> d_w(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    auto p = probs.row(s);
    double acc = 0.0;
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) acc += d_conf(i, j) * p[i] * p[j];
    d_w[s] = acc;
    for (double& v : d_probs.row(s)) v *= t.weights[s];
  }

  // w_s = n a_s / S with a_s = 1 + e^{-H_s}, S = sum a.
  std::vector<double> a(n);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) total += a[s] = 1.0 + std::exp(-t.entropy[s]);
  double dot = 0.0;
  for (std::size_t s = 0; s < n; ++s) dot += d_w[s] * a[s];
  const double nn = static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double d_a = nn / total * d_w[s] - nn / (total * total) * dot;
    const double d_h = -d_a * std::exp(-t.entropy[s]);
    auto p = probs.row(s);
    for (std::size_t j = 0; j < c; ++j) {
      // dH/dp = -(log p + 1)
      d_probs(s, j) += d_h * -(std::log(std::max(p[j], kMccEpsilon)) + 1.0);
    }
  }
  return d_probs;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad) {
  const std::size_t n = logits.rows();
  if (labels.size() != n) throw ShapeError("cross_entropy: label count mismatch");
  if (n == 0) return 0.0;
  double loss = 0.0;
  if (grad) *grad = Matrix(n, logits.cols());
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= z.size()) throw DomainError("cross_entropy: label out of range");
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double total = 0.0;
    for (double v : z) total += std::exp(v - mx);
    const double log_norm = mx + std::log(total);
    loss += log_norm - z[y];
    if (grad) {
      for (std::size_t j = 0; j < z.size(); ++j)
        (*grad)(i, j) = (std::exp(z[j] - log_norm) - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  return loss / static_cast<double>(n);
}

Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs, double temperature) {
  Matrix d(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) inner += d_probs(i, j) * probs(i, j);
    for (std::size_t j = 0; j < probs.cols(); ++j)
      d(i, j) = probs(i, j) * (d_probs(i, j) - inner) / temperature;
  }
  return d;
}

TeacherLoss teacher_loss(const Matrix& logits, std::span<const int> labels, double lambda1,
                         double temperature, Matrix* d_logits) {
  if (!(lambda1 >= 0.0)) throw DomainError("teacher_loss: lambda1 must be >= 0");
  if (!(temperature > 0.0)) throw DomainError("teacher_loss: temperature must be > 0");
  TeacherLoss out;
  out.cross_entropy = cross_entropy(logits, labels, d_logits);
  if (lambda1 > 0.0) {
    const Matrix soft = kernels::softmax_rows(logits, temperature);
    const MccTerms terms = mcc_loss(soft);
    out.mcc = terms.loss;
    if (d_logits) {
      const Matrix d_soft = mcc_loss_grad(soft, terms);
      const Matrix d_z = softmax_backward(soft, d_soft, temperature);
      auto dst = d_logits->flat();
      auto src = d_z.flat();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += lambda1 * src[i];
    }
  }
  out.total = out.cross_entropy + lambda1 * out.mcc;
  return out;
}

}  // namespace cmcrd
