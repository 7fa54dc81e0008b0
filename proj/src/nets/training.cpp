#include "cmcrd/training.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "cmcrd/errors.hpp"

namespace cmcrd {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

template <typename Pick>
Matrix chunked(const NetworkSpec& spec, const ParamSet& params, const Matrix& x, std::size_t chunk,
               std::size_t width, Pick pick) {
  Matrix out(x.rows(), width);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < x.rows(); start += chunk) {
    const std::size_t end = std::min(x.rows(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const ForwardResult r = forward(spec, params, x.gather_rows(idx));
    const Matrix& part = pick(r);
    std::copy(part.flat().begin(), part.flat().end(), out.row(start).data());
  }
  return out;
}

}  // namespace

Matrix predict_probs(const NetworkSpec& spec, const ParamSet& params, const Matrix& x, std::size_t chunk) {
  return chunked(spec, params, x, chunk, spec.num_classes,
                 [](const ForwardResult& r) -> const Matrix& { return r.probs; });
}

Matrix extract_features(const NetworkSpec& spec, const ParamSet& params, const Matrix& x,
                        std::size_t chunk) {
  return chunked(spec, params, x, chunk, spec.feature_dim,
                 [](const ForwardResult& r) -> const Matrix& { return r.features(); });
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const Matrix& probs, std::span<const int> labels) {
  if (labels.size() != probs.rows()) throw ShapeError("accuracy: label count mismatch");
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(probs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double trial_vote_accuracy(const Matrix& probs, std::span<const int> labels,
                           std::span<const int> trial_keys) {
  if (labels.size() != probs.rows() || trial_keys.size() != probs.rows())
    throw ShapeError("trial_vote_accuracy: length mismatch");
  if (labels.empty()) return 0.0;
  std::map<int, std::vector<double>> sums;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto& s = sums[trial_keys[i]];
    s.resize(probs.cols(), 0.0);
    for (std::size_t j = 0; j < probs.cols(); ++j) s[j] += probs(i, j);
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto& s = sums[trial_keys[i]];
    hit += static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()) == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::vector<int> gather(std::span<const int> values, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = values[idx[i]];
  return out;
}

}  // namespace cmcrd
