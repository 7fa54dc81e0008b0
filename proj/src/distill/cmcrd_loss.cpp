#include <cmath>

#include "cmcrd/distill.hpp"
#include "cmcrd/errors.hpp"

namespace cmcrd {

const char* to_string(CmcrdForm f) { return f == CmcrdForm::Literal ? "literal" : "surrogate"; }

CmcrdForm parse_cmcrd_form(const std::string& s) {
  if (s == "literal") return CmcrdForm::Literal;
  if (s == "surrogate") return CmcrdForm::Surrogate;
  throw ConfigError("unknown loss form '" + s + "' (expected literal|surrogate)");
}

GuidanceSets build_guidance_sets(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw ShapeError("build_guidance_sets: label count mismatch");
  GuidanceSets sets;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    (static_cast<int>(best) == labels[i] ? sets.positive : sets.negative).push_back(i);
  }
  return sets;
}

GuidanceSets all_positive(std::size_t n) {
  GuidanceSets sets;
  sets.positive.resize(n);
  for (std::size_t i = 0; i < n; ++i) sets.positive[i] = i;
  return sets;
}

CmcrdResult cmcrd_loss(std::span<const double> L, std::span<const double> W, const GuidanceSets& sets,
                       double tau, CmcrdForm form) {
  if (L.size() != W.size()) throw ShapeError("cmcrd_loss: weights and terms differ in length");
  if (!(tau > 0.0)) throw DomainError("cmcrd_loss: tau must be > 0");
  const std::size_t n = L.size();
  if (sets.positive.size() + sets.negative.size() != n)
    throw ShapeError("cmcrd_loss: guidance sets do not partition the batch");

  CmcrdResult r;
  r.d_per_sample.assign(n, 0.0);
  if (n == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(n);

  auto surrogate_term = [&](const std::vector<std::size_t>& set, double sign) {
    double sum = 0.0;
    for (std::size_t i : set) {
      sum += W[i] * L[i] / tau;
      r.d_per_sample[i] = sign * inv_n * W[i] / tau;
    }
    return sign * inv_n * sum;
  };

  if (form == CmcrdForm::Surrogate) {
    r.loss = surrogate_term(sets.positive, -1.0) + surrogate_term(sets.negative, 1.0);
    return r;
  }
  if (sets.negative.empty()) {
    r.positive_only = true;
    r.loss = surrogate_term(sets.positive, -1.0);
    return r;
  }
  if (sets.positive.empty()) {
    r.negative_only = true;
    r.loss = surrogate_term(sets.negative, 1.0);
    return r;
  }

  constexpr double eps = 1e-12;
  double a = 0.0, b = 0.0;
  for (std::size_t i : sets.positive) a += W[i] * L[i] / tau;
  for (std::size_t i : sets.negative) b += W[i] * L[i] / tau;
  const double abs_a = std::max(std::abs(a), eps);
  const double abs_b = std::max(std::abs(b), eps);
  r.loss = -std::log(abs_a) + std::log(abs_b);
  // d/dx log|x| = 1/x; zero inside the guard.
  const double ga = std::abs(a) > eps ? -1.0 / a : 0.0;
  const double gb = std::abs(b) > eps ? 1.0 / b : 0.0;
  for (std::size_t i : sets.positive) r.d_per_sample[i] = ga * W[i] / tau;
  for (std::size_t i : sets.negative) r.d_per_sample[i] = gb * W[i] / tau;
  return r;
}

}  // namespace cmcrd
