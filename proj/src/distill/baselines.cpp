#include <cmath>

#include "cmcrd/critic.hpp"
#include "cmcrd/distill.hpp"
#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"

namespace cmcrd {

namespace {

using kernels::Trans;

void require_rows(const Matrix& t, const Matrix& s, const char* who) {
  if (t.rows() != s.rows()) throw ShapeError(std::string(who) + ": batch sizes differ");
}

double huber(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }
double huber_grad(double x) { return std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0); }

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

// d/dX of sum (G)^2-style terms where G = X X^T: returns (dG + dG^T) X.
Matrix gram_backward(const Matrix& x, const Matrix& d_gram) {
  Matrix sym(d_gram.rows(), d_gram.cols());
  for (std::size_t i = 0; i < sym.rows(); ++i)
    for (std::size_t j = 0; j < sym.cols(); ++j) sym(i, j) = d_gram(i, j) + d_gram(j, i);
  return kernels::matmul(sym, x);
}

// Pairwise Euclidean distances.
Matrix pairwise_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double diff = x(i, k) - x(j, k);
        s += diff * diff;
      }
      d(i, j) = d(j, i) = std::sqrt(s);
    }
  return d;
}

double mean_positive(const Matrix& d) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : d.flat())
    if (v > 0.0) {
      sum += v;
      ++count;
    }
  return count ? sum / static_cast<double>(count) : 0.0;
}

// Unit vectors e(i->j) = normalize(x_j - x_i) for a fixed anchor i.
Matrix anchor_directions(const Matrix& x, std::size_t i, std::vector<double>& norms) {
  Matrix e(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.rows(); ++j)
    for (std::size_t k = 0; k < x.cols(); ++k) e(j, k) = x(j, k) - x(i, k);
  return normalize_rows(e, &norms);
}

// Rows of the cosine kernel (cos + 1)/2 scaled to sum to one.
Matrix cosine_conditional(const Matrix& unit, Matrix* kernel, std::vector<double>* sums) {
  Matrix k = kernels::matmul(unit, unit, Trans::No, Trans::Yes);
  for (double& v : k.flat()) v = (v + 1.0) / 2.0;
  Matrix p(k.rows(), k.cols());
  sums->assign(k.rows(), 0.0);
  for (std::size_t i = 0; i < k.rows(); ++i) {
    double s = 0.0;
    for (double v : k.row(i)) s += v;
    (*sums)[i] = s;
    for (std::size_t j = 0; j < k.cols(); ++j) p(i, j) = k(i, j) / s;
  }
  if (kernel) *kernel = std::move(k);
  return p;
}

}  // namespace

// ---- KD -------------------------------------------------------------------

double kd_loss(const Matrix& t, const Matrix& s, double temperature, Matrix* d_student) {
  require_rows(t, s, "kd_loss");
  if (!t.same_shape(s)) throw ShapeError("kd_loss: logit shapes differ");
  if (!(temperature > 0.0)) throw DomainError("kd_loss: temperature must be > 0");
  const Matrix pt = kernels::softmax_rows(t, temperature);
  const Matrix ps = kernels::softmax_rows(s, temperature);
  const double n = static_cast<double>(t.rows());
  double kl = 0.0;
  for (std::size_t i = 0; i < pt.rows(); ++i)
    for (std::size_t k = 0; k < pt.cols(); ++k)
      if (pt(i, k) > 0.0) kl += pt(i, k) * (std::log(pt(i, k)) - std::log(std::max(ps(i, k), 1e-300)));
  if (d_student) {
    *d_student = Matrix(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i)
      for (std::size_t k = 0; k < s.cols(); ++k)
        (*d_student)(i, k) = temperature * (ps(i, k) - pt(i, k)) / n;
  }
  return temperature * temperature * kl / n;
}

// ---- FitNet ---------------------------------------------------------------

double fitnet_loss(const Matrix& t, const Matrix& s, const ParamSet& reg, Matrix* d_student,
                   ParamSet* d_reg) {
  require_rows(t, s, "fitnet_loss");
  const Matrix r = linear_forward(reg, "fitnet", s);
  if (!r.same_shape(t)) throw ShapeError("fitnet_loss: regressor output does not match teacher hint");
  const double denom = static_cast<double>(t.size());
  Matrix dr(r.rows(), r.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double diff = r.data()[i] - t.data()[i];
    loss += diff * diff;
    dr.data()[i] = 2.0 * diff / denom;
  }
  if (d_student || d_reg) {
    ParamSet scratch = reg.zeros_like();
    ParamSet& g = d_reg ? *d_reg : scratch;
    Matrix dx = linear_backward(reg, "fitnet", s, dr, g, d_student != nullptr);
    if (d_student) *d_student = std::move(dx);
  }
  return loss / denom;
}

// ---- NST ------------------------------------------------------------------

double nst_loss(const Matrix& t, const Matrix& s, Matrix* d_student) {
  require_rows(t, s, "nst_loss");
  // Neurons become rows, each normalised over the batch.
  std::vector<double> t_norms, s_norms;
  const Matrix ft = normalize_rows(transpose(t), &t_norms);
  const Matrix fs = normalize_rows(transpose(s), &s_norms);
  const double dt = static_cast<double>(ft.rows()), ds = static_cast<double>(fs.rows());
  const Matrix gtt = kernels::matmul(ft, ft, Trans::No, Trans::Yes);
  const Matrix gss = kernels::matmul(fs, fs, Trans::No, Trans::Yes);
  const Matrix gts = kernels::matmul(ft, fs, Trans::No, Trans::Yes);
  auto sq_sum = [](const Matrix& m) {
    double acc = 0.0;
    for (double v : m.flat()) acc += v * v;
    return acc;
  };
  const double loss = sq_sum(gtt) / (dt * dt) + sq_sum(gss) / (ds * ds) - 2.0 * sq_sum(gts) / (dt * ds);
  if (d_student) {
    // d/dfs: 4 gss fs / ds^2 - 4 gts^T ft / (dt ds)
    Matrix dfs = kernels::matmul(gss, fs);
    for (double& v : dfs.flat()) v *= 4.0 / (ds * ds);
    kernels::gemm(Trans::Yes, Trans::No, -4.0 / (dt * ds), gts, ft, 1.0, dfs);
    *d_student = transpose(normalize_rows_backward(fs, s_norms, dfs));
  }
  return loss;
}

// ---- SP -------------------------------------------------------------------

double sp_loss(const Matrix& t, const Matrix& s, Matrix* d_student) {
  require_rows(t, s, "sp_loss");
  const std::size_t n = t.rows();
  std::vector<double> s_norms;
  const Matrix gt = normalize_rows(kernels::matmul(t, t, Trans::No, Trans::Yes));
  const Matrix gs = normalize_rows(kernels::matmul(s, s, Trans::No, Trans::Yes), &s_norms);
  const double nn = static_cast<double>(n * n);
  double loss = 0.0;
  Matrix dgs(n, n);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double diff = gs.data()[i] - gt.data()[i];
    loss += diff * diff;
    dgs.data()[i] = 2.0 * diff / nn;
  }
  if (d_student) *d_student = gram_backward(s, normalize_rows_backward(gs, s_norms, dgs));
  return loss / nn;
}

// ---- RKD ------------------------------------------------------------------

double rkd_loss(const Matrix& t, const Matrix& s, double wd, double wa, Matrix* d_student) {
  require_rows(t, s, "rkd_loss");
  const std::size_t n = t.rows();
  const std::size_t dim = s.cols();
  if (d_student) *d_student = Matrix(n, dim);
  double loss = 0.0;

  if (wd != 0.0) {
    const Matrix td = pairwise_distances(t);
    const Matrix sd = pairwise_distances(s);
    const double mt = mean_positive(td), ms = mean_positive(sd);
    const double nn = static_cast<double>(n * n);
    Matrix dpsi(n, n);
    double dist_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double psi_t = mt > 0.0 ? td(i, j) / mt : 0.0;
        const double psi_s = ms > 0.0 ? sd(i, j) / ms : 0.0;
        dist_loss += huber(psi_s - psi_t);
        dpsi(i, j) = wd * huber_grad(psi_s - psi_t) / nn;
      }
    loss += wd * dist_loss / nn;
    if (d_student && ms > 0.0) {
      // psi = d / mean(d > 0)
      std::size_t pos = 0;
      double dot = 0.0;
      for (std::size_t k = 0; k < n * n; ++k)
        if (sd.data()[k] > 0.0) {
          ++pos;
          dot += dpsi.data()[k] * sd.data()[k];
        }
      const double mean_term = dot / (ms * ms * static_cast<double>(pos));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (sd(i, j) <= 0.0) continue;
          const double dd = dpsi(i, j) / ms - mean_term;
          for (std::size_t k = 0; k < dim; ++k) {
            const double g = dd * (s(i, k) - s(j, k)) / sd(i, j);
            (*d_student)(i, k) += g;
            (*d_student)(j, k) -= g;
          }
        }
    }
  }

  if (wa != 0.0) {
    const double n3 = static_cast<double>(n * n * n);
    double angle_loss = 0.0;
    std::vector<double> t_norms, s_norms;
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix et = anchor_directions(t, i, t_norms);
      const Matrix es = anchor_directions(s, i, s_norms);
      const Matrix at = kernels::matmul(et, et, Trans::No, Trans::Yes);
      const Matrix as = kernels::matmul(es, es, Trans::No, Trans::Yes);
      Matrix da(n, n);
      for (std::size_t k = 0; k < at.size(); ++k) {
        const double diff = as.data()[k] - at.data()[k];
        angle_loss += huber(diff);
        da.data()[k] = wa * huber_grad(diff) / n3;
      }
      if (!d_student) continue;
      const Matrix dv = normalize_rows_backward(es, s_norms, gram_backward(es, da));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < dim; ++k) {
          (*d_student)(j, k) += dv(j, k);
          (*d_student)(i, k) -= dv(j, k);
        }
    }
    loss += wa * angle_loss / n3;
  }
  return loss;
}

// ---- PKT ------------------------------------------------------------------

double pkt_loss(const Matrix& t, const Matrix& s, Matrix* d_student) {
  require_rows(t, s, "pkt_loss");
  constexpr double eps = 1e-7;
  const std::size_t n = t.rows();
  std::vector<double> t_sums, s_sums, s_norms;
  const Matrix pt = cosine_conditional(normalize_rows(t), nullptr, &t_sums);
  const Matrix su = normalize_rows(s, &s_norms);
  Matrix ks;
  const Matrix ps = cosine_conditional(su, &ks, &s_sums);
  const double nn = static_cast<double>(n * n);
  double loss = 0.0;
  Matrix dp(n, n);
  for (std::size_t k = 0; k < pt.size(); ++k) {
    const double a = pt.data()[k], b = ps.data()[k];
    loss += a * std::log((a + eps) / (b + eps));
    dp.data()[k] = -a / ((b + eps) * nn);
  }
  if (d_student) {
    Matrix dcos(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < n; ++j) inner += dp(i, j) * ks(i, j);
      const double r = s_sums[i];
      for (std::size_t j = 0; j < n; ++j) dcos(i, j) = 0.5 * (dp(i, j) / r - inner / (r * r));
    }
    *d_student = normalize_rows_backward(su, s_norms, gram_backward(su, dcos));
  }
  return loss / nn;
}

}  // namespace cmcrd
