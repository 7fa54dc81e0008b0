#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"
#include "cmcrd/nets.hpp"

namespace cmcrd {

void ParamSet::add(std::string name, Matrix value) {
  if (contains(name)) throw ShapeError("duplicate parameter name: " + name);
  tensors_.push_back({std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const auto& t) { return t.name == name; });
}

Matrix& ParamSet::at(std::string_view name) {
  for (auto& t : tensors_)
    if (t.name == name) return t.value;
  throw ShapeError("unknown parameter: " + std::string(name));
}

const Matrix& ParamSet::at(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t.value;
  throw ShapeError("unknown parameter: " + std::string(name));
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.tensors_.reserve(tensors_.size());
  for (const auto& t : tensors_) out.tensors_.push_back({t.name, Matrix(t.value.rows(), t.value.cols())});
  return out;
}

bool ParamSet::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(), [](const auto& t) { return t.value.all_finite(); });
}

void ParamSet::axpy(double scale, const ParamSet& other) {
  if (other.size() != size()) throw ShapeError("ParamSet::axpy: size mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    auto dst = tensors_[i].value.flat();
    auto src = other.tensors_[i].value.flat();
    if (dst.size() != src.size()) throw ShapeError("ParamSet::axpy: shape mismatch at " + tensors_[i].name);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

void ParamSet::append(const ParamSet& other, std::string_view prefix) {
  for (const auto& t : other.tensors_) add(std::string(prefix) + t.name, t.value);
}

ParamSet ParamSet::extract(std::string_view prefix) const {
  ParamSet out;
  for (const auto& t : tensors_)
    if (t.name.rfind(prefix, 0) == 0) out.add(t.name.substr(prefix.size()), t.value);
  return out;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  return true;
}

// ---------------------------------------------------------------------------

ParamSet init_linear(std::size_t in, std::size_t out, std::uint64_t seed, std::string_view prefix) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(3.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix w(in, out);
  for (double& v : w.flat()) v = u(rng);
  ParamSet p;
  p.add(std::string(prefix) + ".weight", std::move(w));
  p.add(std::string(prefix) + ".bias", Matrix(1, out));
  return p;
}

Matrix linear_forward(const ParamSet& p, std::string_view prefix, const Matrix& x) {
  const std::string base(prefix);
  const Matrix& w = p.at(base + ".weight");
  const Matrix& b = p.at(base + ".bias");
  if (x.cols() != w.rows())
    throw ShapeError(base + ": input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(w.rows()));
  Matrix y = kernels::matmul(x, w);
  kernels::add_row_vector(y, b.row(0));
  return y;
}

Matrix linear_backward(const ParamSet& p, std::string_view prefix, const Matrix& x, const Matrix& dy,
                       ParamSet& grads, bool need_input_grad) {
  const std::string base(prefix);
  const Matrix& w = p.at(base + ".weight");
  Matrix& gw = grads.at(base + ".weight");
  Matrix& gb = grads.at(base + ".bias");
  kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, 1.0, x, dy, 1.0, gw);
  std::vector<double> colsum(dy.cols());
  kernels::column_sums(dy, colsum);
  for (std::size_t j = 0; j < colsum.size(); ++j) gb(0, j) += colsum[j];
  if (!need_input_grad) return {};
  return kernels::matmul(dy, w, kernels::Trans::No, kernels::Trans::Yes);
}

// ---------------------------------------------------------------------------

void save_params(const ParamSet& params, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "cmcrd-params";
  j["version"] = 1;
  auto& arr = j["params"] = nlohmann::json::array();
  for (const auto& t : params) {
    arr.push_back({{"name", t.name},
                   {"shape", {t.value.rows(), t.value.cols()}},
                   {"values", std::vector<double>(t.value.flat().begin(), t.value.flat().end())}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint: " + path.string());
  out << j.dump() << '\n';
}

ParamSet load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open checkpoint: " + path.string());
  ParamSet p;
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format") != "cmcrd-params") throw SchemaError(path.string() + ": not a parameter checkpoint");
    if (j.at("version").get<int>() != 1)
      throw SchemaError(path.string() + ": unsupported checkpoint version");
    for (const auto& t : j.at("params")) {
      const auto rows = t.at("shape").at(0).get<std::size_t>();
      const auto cols = t.at("shape").at(1).get<std::size_t>();
      const auto values = t.at("values").get<std::vector<double>>();
      if (values.size() != rows * cols)
        throw SchemaError(path.string() + ": value count does not match shape for " +
                          t.at("name").get<std::string>());
      Matrix m(rows, cols);
      std::copy(values.begin(), values.end(), m.data());
      p.add(t.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return p;
}

}  // namespace cmcrd
