#include "cmcrd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "cmcrd/errors.hpp"

namespace cmcrd {

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw InputError("paired t-test: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                     " paired values");
  if (a.size() < 2) throw InputError("paired t-test: need at least two pairs");
  TTestResult r;
  const std::size_t n = a.size();
  r.differences.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.differences[i] = a[i] - b[i];
  const double mean = std::accumulate(r.differences.begin(), r.differences.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double d : r.differences) ss += (d - mean) * (d - mean);
  r.df = static_cast<double>(n - 1);
  const double var = ss / r.df;
  // Differences equal up to rounding count as constant.
  const double scale = std::max(1.0, std::abs(mean));
  if (var <= 1e-24 * scale * scale) {
    r.degenerate = true;
    const bool all_zero = std::all_of(r.differences.begin(), r.differences.end(), [](double d) { return d == 0.0; });
    r.p = all_zero ? 1.0 : 0.0;
    r.t = all_zero ? 0.0 : std::copysign(INFINITY, mean);
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  const boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

std::vector<double> bh_adjust(std::span<const double> p) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("bh_adjust: p-value " + std::to_string(v) + " outside [0, 1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p[x] < p[y]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t rank = m; rank-- > 0;) {
    const std::size_t i = order[rank];
    running = std::min(running, static_cast<double>(m) * p[i] / static_cast<double>(rank + 1));
    adjusted[i] = std::min(running, 1.0);
  }
  return adjusted;
}

}  // namespace cmcrd
