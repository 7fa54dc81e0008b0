#include <algorithm>
#include <cmath>
#include <random>

#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"
#include "cmcrd/nets.hpp"

namespace cmcrd {

using kernels::Trans;

const char* to_string(Family f) { return f == Family::Dnn ? "dnn" : "dgcnn"; }

Family parse_family(const std::string& s) {
  if (s == "dnn" || s == "DNN") return Family::Dnn;
  if (s == "dgcnn" || s == "DGCNN") return Family::Dgcnn;
  throw ConfigError("unknown architecture '" + s + "' (expected dnn|dgcnn)");
}

NetworkSpec NetworkSpec::dnn(std::size_t input_dim, std::size_t num_classes) {
  NetworkSpec s;
  s.family = Family::Dnn;
  s.input_dim = input_dim;
  s.num_classes = num_classes;
  return s;
}

NetworkSpec NetworkSpec::dgcnn(std::size_t channels, std::size_t bands, std::size_t num_classes) {
  NetworkSpec s;
  s.family = Family::Dgcnn;
  s.channels = channels;
  s.bands = bands;
  s.input_dim = channels * bands;
  s.hidden = {16};
  s.num_classes = num_classes;
  return s;
}

std::size_t NetworkSpec::extractor_layers() const { return hidden.size() + 1; }

std::size_t NetworkSpec::layer_width(std::size_t i) const {
  if (i >= extractor_layers()) throw ShapeError("layer index out of range");
  if (i == hidden.size()) return feature_dim;
  if (family == Family::Dgcnn && i == 0) return channels * hidden[0];
  return hidden[i];
}

void validate(const NetworkSpec& s) {
  if (s.feature_dim == 0) throw ConfigError("network: feature_dim must be positive");
  if (s.num_classes < 2) throw ConfigError("network: num_classes must be >= 2");
  if (s.input_dim == 0) throw ConfigError("network: input_dim must be positive");
  for (auto w : s.hidden)
    if (w == 0) throw ConfigError("network: hidden widths must be positive");
  if (!(s.l2_coefficient >= 0.0)) throw ConfigError("network: l2_coefficient must be >= 0");
  if (s.family == Family::Dgcnn) {
    if (s.cheb_order < 1) throw ConfigError("network: DGCNN Chebyshev order must be >= 1");
    if (s.hidden.empty()) throw ConfigError("network: DGCNN needs hidden[0] = graph filters");
    if (s.channels * s.bands != s.input_dim)
      throw ConfigError("network: DGCNN input_dim must equal channels x bands");
  }
}

namespace {

std::string dense_name(std::size_t i) { return "extractor." + std::to_string(i); }

std::size_t first_dense_layer(const NetworkSpec& s) { return s.family == Family::Dgcnn ? 1 : 0; }

std::size_t dense_input_width(const NetworkSpec& s, std::size_t i) {
  return i == 0 ? s.input_dim : s.layer_width(i - 1);
}

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : m.flat()) v = u(rng);
}

// ---- DGCNN graph layer ------------------------------------------------------

constexpr double kDegreeEps = 1e-10;

Matrix graph_forward(const NetworkSpec& s, const ParamSet& p, const Matrix& x, DgcnnCache& cache) {
  const std::size_t ch = s.channels, bands = s.bands, filters = s.hidden[0];
  const std::size_t batch = x.rows();
  const Matrix& adj = p.at("graph.adjacency");

  cache.relu_adjacency = adj;
  kernels::relu_inplace(cache.relu_adjacency);
  cache.inv_sqrt_degree.assign(ch, 0.0);
  for (std::size_t i = 0; i < ch; ++i) {
    double d = 0.0;
    for (double v : cache.relu_adjacency.row(i)) d += v;
    cache.inv_sqrt_degree[i] = 1.0 / std::sqrt(d + kDegreeEps);
  }
  cache.laplacian = Matrix(ch, ch);
  for (std::size_t i = 0; i < ch; ++i)
    for (std::size_t j = 0; j < ch; ++j)
      cache.laplacian(i, j) =
          -cache.inv_sqrt_degree[i] * cache.relu_adjacency(i, j) * cache.inv_sqrt_degree[j];

  // T_0 X in node-major layout: (channel, sample*bands + band)
  Matrix x0(ch, batch * bands);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t f = 0; f < bands; ++f) x0(c, b * bands + f) = x(b, c * bands + f);

  cache.cheb.clear();
  cache.cheb.push_back(std::move(x0));
  for (std::size_t k = 1; k < s.cheb_order; ++k) {
    Matrix next = kernels::matmul(cache.laplacian, cache.cheb[k - 1]);
    if (k >= 2) {
      auto out = next.flat();
      auto prev2 = cache.cheb[k - 2].flat();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * out[i] - prev2[i];
    }
    cache.cheb.push_back(std::move(next));
  }

  cache.cheb_rows.clear();
  Matrix h(batch * ch, filters);
  for (std::size_t k = 0; k < s.cheb_order; ++k) {
    Matrix rows(batch * ch, bands);
    const Matrix& z = cache.cheb[k];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t f = 0; f < bands; ++f) rows(b * ch + c, f) = z(c, b * bands + f);
    kernels::gemm(Trans::No, Trans::No, 1.0, rows, p.at("graph.cheb." + std::to_string(k)), 1.0, h);
    cache.cheb_rows.push_back(std::move(rows));
  }
  kernels::add_row_vector(h, p.at("graph.bias").row(0));
  kernels::relu_inplace(h);

  // (batch*channels x filters) row-major is exactly (batch x channels*filters).
  Matrix out(batch, ch * filters);
  std::copy(h.flat().begin(), h.flat().end(), out.data());
  return out;
}

void graph_backward(const NetworkSpec& s, const ParamSet& p, const DgcnnCache& cache,
                    const Matrix& d_out, ParamSet& g) {
  const std::size_t ch = s.channels, bands = s.bands, filters = s.hidden[0];
  const std::size_t batch = d_out.rows();

  Matrix dh(batch * ch, filters);
  std::copy(d_out.flat().begin(), d_out.flat().end(), dh.data());

  std::vector<double> colsum(filters);
  kernels::column_sums(dh, colsum);
  Matrix& gbias = g.at("graph.bias");
  for (std::size_t j = 0; j < filters; ++j) gbias(0, j) += colsum[j];

  // Gradients w.r.t. each Chebyshev term, in node-major layout.
  std::vector<Matrix> dz(s.cheb_order);
  for (std::size_t k = 0; k < s.cheb_order; ++k) {
    const std::string wname = "graph.cheb." + std::to_string(k);
    kernels::gemm(Trans::Yes, Trans::No, 1.0, cache.cheb_rows[k], dh, 1.0, g.at(wname));
    if (k == 0) continue;  // T_0 X = X carries no parameter dependence
    Matrix drows = kernels::matmul(dh, p.at(wname), Trans::No, Trans::Yes);
    dz[k] = Matrix(ch, batch * bands);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t f = 0; f < bands; ++f) dz[k](c, b * bands + f) = drows(b * ch + c, f);
  }
  if (s.cheb_order < 2) return;

  // Z_1 = L Z_0, Z_k = 2 L Z_{k-1} - Z_{k-2}; walk the recursion backwards.
  Matrix dlap(ch, ch);
  for (std::size_t k = s.cheb_order - 1; k >= 2; --k) {
    kernels::gemm(Trans::No, Trans::Yes, 2.0, dz[k], cache.cheb[k - 1], 1.0, dlap);
    kernels::gemm(Trans::Yes, Trans::No, 2.0, cache.laplacian, dz[k], 1.0, dz[k - 1]);
    if (k - 2 >= 1) {
      auto dst = dz[k - 2].flat();
      auto src = dz[k].flat();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= src[i];
    }
  }
  kernels::gemm(Trans::No, Trans::Yes, 1.0, dz[1], cache.cheb[0], 1.0, dlap);

  // L_ij = -s_i A_ij s_j with s_i = (d_i + eps)^{-1/2}, d_i = sum_j A_ij.
  const auto& sv = cache.inv_sqrt_degree;
  const Matrix& a = cache.relu_adjacency;
  std::vector<double> ds(ch, 0.0);
  for (std::size_t i = 0; i < ch; ++i)
    for (std::size_t j = 0; j < ch; ++j) {
      const double ga = dlap(i, j) * a(i, j);
      ds[i] -= ga * sv[j];
      ds[j] -= ga * sv[i];
    }
  Matrix& gadj = g.at("graph.adjacency");
  const Matrix& raw = p.at("graph.adjacency");
  for (std::size_t i = 0; i < ch; ++i) {
    // d s_i / d d_i = -1/2 s_i^3
    const double dd = -0.5 * ds[i] * sv[i] * sv[i] * sv[i];
    for (std::size_t j = 0; j < ch; ++j) {
      if (!(raw(i, j) > 0.0)) continue;
      gadj(i, j) += -sv[i] * sv[j] * dlap(i, j) + dd;
    }
  }
}

}  // namespace

ParamSet init_params(const NetworkSpec& s, std::uint64_t seed) {
  validate(s);
  std::mt19937_64 rng(seed);
  ParamSet p;
  if (s.family == Family::Dgcnn) {
    Matrix adj(s.channels, s.channels);
    std::uniform_real_distribution<double> u(0.01, 0.1);
    for (std::size_t i = 0; i < s.channels; ++i)
      for (std::size_t j = i; j < s.channels; ++j) adj(i, j) = adj(j, i) = u(rng);
    p.add("graph.adjacency", std::move(adj));
    const double bound = std::sqrt(6.0 / static_cast<double>(s.bands * s.cheb_order));
    for (std::size_t k = 0; k < s.cheb_order; ++k) {
      Matrix w(s.bands, s.hidden[0]);
      fill_uniform(w, bound, rng);
      p.add("graph.cheb." + std::to_string(k), std::move(w));
    }
    p.add("graph.bias", Matrix(1, s.hidden[0]));
  }
  for (std::size_t i = first_dense_layer(s); i < s.extractor_layers(); ++i) {
    const std::size_t in = dense_input_width(s, i);
    Matrix w(in, s.layer_width(i));
    fill_uniform(w, std::sqrt(6.0 / static_cast<double>(in)), rng);
    p.add(dense_name(i) + ".weight", std::move(w));
    p.add(dense_name(i) + ".bias", Matrix(1, s.layer_width(i)));
  }
  Matrix w(s.feature_dim, s.num_classes);
  fill_uniform(w, std::sqrt(3.0 / static_cast<double>(s.feature_dim)), rng);
  p.add("classifier.weight", std::move(w));
  p.add("classifier.bias", Matrix(1, s.num_classes));
  return p;
}

ForwardResult forward(const NetworkSpec& s, const ParamSet& p, const Matrix& batch) {
  if (batch.cols() != s.input_dim)
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                     std::to_string(s.input_dim));
  ForwardResult r;
  r.input = batch;
  if (s.family == Family::Dgcnn) r.layer_outputs.push_back(graph_forward(s, p, batch, r.graph));
  for (std::size_t i = first_dense_layer(s); i < s.extractor_layers(); ++i) {
    const Matrix& in = i == 0 ? batch : r.layer_outputs.back();
    Matrix y = linear_forward(p, dense_name(i), in);
    kernels::relu_inplace(y);
    r.layer_outputs.push_back(std::move(y));
  }
  r.logits = linear_forward(p, "classifier", r.features());
  r.probs = kernels::softmax_rows(r.logits);
  return r;
}

OutputGrads OutputGrads::for_result(const ForwardResult& r) {
  OutputGrads g;
  g.logits = Matrix(r.logits.rows(), r.logits.cols());
  for (const auto& l : r.layer_outputs) g.layers.emplace_back(l.rows(), l.cols());
  return g;
}

ParamSet backward(const NetworkSpec& s, const ParamSet& p, const ForwardResult& r,
                  const OutputGrads& up) {
  ParamSet g = p.zeros_like();
  const std::size_t n_layers = s.extractor_layers();
  if (!up.layers.empty() && up.layers.size() != n_layers)
    throw ShapeError("backward: expected one upstream slot per extractor layer");

  Matrix d = up.logits.empty() ? Matrix(r.features().rows(), r.features().cols())
                               : linear_backward(p, "classifier", r.features(), up.logits, g);
  for (std::size_t i = n_layers; i-- > first_dense_layer(s);) {
    if (!up.layers.empty() && !up.layers[i].empty()) {
      if (!up.layers[i].same_shape(d)) throw ShapeError("backward: upstream layer grad shape");
      auto dst = d.flat();
      auto src = up.layers[i].flat();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    kernels::relu_backward(r.layer_outputs[i], d);
    const Matrix& in = i == 0 ? r.input : r.layer_outputs[i - 1];
    d = linear_backward(p, dense_name(i), in, d, g, i > 0);
  }
  if (s.family == Family::Dgcnn) {
    if (!up.layers.empty() && !up.layers[0].empty()) {
      auto dst = d.flat();
      auto src = up.layers[0].flat();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    kernels::relu_backward(r.layer_outputs[0], d);
    graph_backward(s, p, r.graph, d, g);
  }
  return g;
}

}  // namespace cmcrd
