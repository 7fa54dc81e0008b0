#include <doctest.h>

#include <vector>

#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"
#include "support.hpp"

using namespace cmcrd;
using kernels::Trans;

TEST_CASE("parallel gemm agrees with the serial reference for every transpose") {
  for (Trans ta : {Trans::No, Trans::Yes})
    for (Trans tb : {Trans::No, Trans::Yes}) {
      const std::size_t m = 37, k = 19, n = 23;
      const Matrix a = ta == Trans::No ? testing::random_matrix(m, k, 1) : testing::random_matrix(k, m, 1);
      const Matrix b = tb == Trans::No ? testing::random_matrix(k, n, 2) : testing::random_matrix(n, k, 2);
      Matrix c = testing::random_matrix(m, n, 3), ref = c;
      kernels::gemm(ta, tb, 0.7, a, b, -1.3, c);
      kernels::reference::gemm(ta, tb, 0.7, a, b, -1.3, ref);
      CHECK(testing::rel_error(c, ref) < 1e-12);
    }
}

TEST_CASE("gemm rejects a mis-shaped output") {
  const Matrix a(2, 3), b(3, 4);
  Matrix c(2, 5);
  CHECK_THROWS_AS(kernels::gemm(Trans::No, Trans::No, 1.0, a, b, 0.0, c), ShapeError);
}

TEST_CASE("row and column helpers match the reference") {
  Matrix m = testing::random_matrix(41, 7, 4), ref = m;
  const std::vector<double> v = {1, -2, 3, -4, 5, -6, 7};
  kernels::add_row_vector(m, v);
  kernels::reference::add_row_vector(ref, v);
  CHECK(m == ref);

  std::vector<double> s(7), sr(7);
  kernels::column_sums(m, s);
  kernels::reference::column_sums(m, sr);
  for (std::size_t i = 0; i < 7; ++i) CHECK(s[i] == doctest::Approx(sr[i]).epsilon(1e-12));

  Matrix act = m, act_ref = m;
  kernels::relu_inplace(act);
  kernels::reference::relu_inplace(act_ref);
  CHECK(act == act_ref);
  Matrix g = testing::random_matrix(41, 7, 5), g_ref = g;
  kernels::relu_backward(act, g);
  kernels::reference::relu_backward(act_ref, g_ref);
  CHECK(g == g_ref);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  Matrix logits = testing::random_matrix(9, 5, 6, 3.0);
  logits(0, 0) = 1e4;
  const Matrix p = kernels::softmax_rows(logits, 2.0);
  CHECK(testing::rel_error(p, kernels::reference::softmax_rows(logits, 2.0)) < 1e-12);
  CHECK(p.all_finite());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(p(0, 0) == doctest::Approx(1.0));
}
