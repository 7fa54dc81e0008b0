#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cmcrd/matrix.hpp"
#include "cmcrd/nets.hpp"

namespace testing {

inline cmcrd::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  cmcrd::Matrix m(r, c);
  for (double& v : m.flat()) v = n(rng);
  return m;
}

// Rows drawn from a Dirichlet(1,...,1).
inline cmcrd::Matrix random_simplex(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  cmcrd::Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += m(i, j) = e(rng);
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= s;
  }
  return m;
}

// Central differences of f at x, step eps.
inline cmcrd::Matrix numeric_grad(const std::function<double(const cmcrd::Matrix&)>& f, cmcrd::Matrix x,
                                  double eps = 1e-4) {
  cmcrd::Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + eps;
    const double up = f(x);
    x.data()[i] = keep - eps;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

// max |a - b| / max(1, |a|, |b|) over entries.
inline double rel_error(const cmcrd::Matrix& a, const cmcrd::Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    worst = std::max(worst, std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}));
  }
  return worst;
}

// A loss evaluated on a forward pass. When `up` is non-null it must receive
// the upstream gradients at the network outputs.
using Head = std::function<double(const cmcrd::ForwardResult&, cmcrd::OutputGrads* up)>;

// Worst relative error between backward() through `head` and central
// differences over every parameter scalar.
inline double param_grad_error(const cmcrd::NetworkSpec& spec, cmcrd::ParamSet params, const cmcrd::Matrix& x,
                               const Head& head, double eps = 1e-4) {
  const auto fr = cmcrd::forward(spec, params, x);
  auto up = cmcrd::OutputGrads::for_result(fr);
  head(fr, &up);
  const cmcrd::ParamSet analytic = cmcrd::backward(spec, params, fr, up);
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    cmcrd::Matrix& w = params[t].value;
    cmcrd::Matrix numeric(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + eps;
      const double hi = head(cmcrd::forward(spec, params, x), nullptr);
      w.data()[i] = keep - eps;
      const double lo = head(cmcrd::forward(spec, params, x), nullptr);
      w.data()[i] = keep;
      numeric.data()[i] = (hi - lo) / (2.0 * eps);
    }
    worst = std::max(worst, rel_error(analytic[t].value, numeric));
  }
  return worst;
}

inline cmcrd::NetworkSpec tiny_dnn(std::size_t input = 4, std::size_t classes = 3) {
  cmcrd::NetworkSpec s = cmcrd::NetworkSpec::dnn(input, classes);
  s.hidden = {5};
  s.feature_dim = 4;
  return s;
}

// init_params with small positive biases, so no pre-activation starts exactly
// on the ReLU kink (zero bias meeting an all-dead layer).
inline cmcrd::ParamSet lively_params(const cmcrd::NetworkSpec& spec, std::uint64_t seed) {
  cmcrd::ParamSet p = cmcrd::init_params(spec, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  std::uniform_real_distribution<double> u(0.05, 0.3);
  for (auto& t : p)
    if (t.name.size() > 5 && t.name.compare(t.name.size() - 5, 5, ".bias") == 0)
      for (double& v : t.value.flat()) v += u(rng);
  return p;
}

// Scalar minimum-class-confusion loss, one loop per index.
inline double mcc_oracle(const cmcrd::Matrix& p) {
  const std::size_t n = p.rows(), c = p.cols();
  std::vector<double> h(n, 0.0), w(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j)
      if (p(i, j) > 0.0) h[i] -= p(i, j) * std::log(p(i, j));
    z += 1.0 + std::exp(-h[i]);
  }
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(n) * (1.0 + std::exp(-h[i])) / z;
  double loss = 0.0;
  for (std::size_t a = 0; a < c; ++a) {
    std::vector<double> row(c, 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < c; ++b) {
      for (std::size_t i = 0; i < n; ++i) row[b] += p(i, a) * w[i] * p(i, b);
      total += row[b];
    }
    for (std::size_t b = 0; b < c; ++b)
      if (b != a) loss += total > 1e-12 ? std::abs(row[b]) / total : 1.0 / static_cast<double>(c);
  }
  return loss / static_cast<double>(c);
}

// Two-sided sign-flip permutation p-value for the mean of paired differences.
inline double permutation_pvalue(const std::vector<double>& d, std::size_t draws, std::uint64_t seed) {
  double observed = 0.0;
  for (double v : d) observed += v;
  observed = std::abs(observed);
  std::mt19937_64 rng(seed);
  std::size_t extreme = 0;
  for (std::size_t k = 0; k < draws; ++k) {
    double s = 0.0;
    for (double v : d) s += (rng() & 1u) ? v : -v;
    if (std::abs(s) >= observed - 1e-12) ++extreme;
  }
  return (static_cast<double>(extreme) + 1.0) / (static_cast<double>(draws) + 1.0);
}

}  // namespace testing
