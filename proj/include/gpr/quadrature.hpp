#ifndef GPR_QUADRATURE_HPP
#define GPR_QUADRATURE_HPP

#include <Eigen/Core>

#include <cmath>
#include <functional>

#include "gpr/errors.hpp"

namespace gpr {

/// Composite Simpson rule on uniformly spaced samples y₀..y_n (n even) with spacing h.
template <typename Derived>
typename Derived::Scalar simpson_samples(const Eigen::DenseBase<Derived>& y, typename Derived::Scalar h) {
  const Eigen::Index n = y.size() - 1;
  if (n < 2 || n % 2 != 0) throw DomainError("simpson: need an even number of intervals");
  typename Derived::Scalar odd = 0, even = 0;
  for (Eigen::Index i = 1; i < n; i += 2) odd += y[i];
  for (Eigen::Index i = 2; i < n; i += 2) even += y[i];
  return h / 3 * (y[0] + y[n] + 4 * odd + 2 * even);
}

/// Composite Simpson rule for f on [a, b] with `intervals` subintervals (rounded up to even).
template <typename Real, typename F>
Real simpson(F&& f, Real a, Real b, int intervals) {
  if (intervals < 2) intervals = 2;
  if (intervals % 2) ++intervals;
  if (b == a) return Real(0);
  const Real h = (b - a) / intervals;
  Real odd = 0, even = 0;
  for (int i = 1; i < intervals; i += 2) odd += f(a + i * h);
  for (int i = 2; i < intervals; i += 2) even += f(a + i * h);
  return h / 3 * (f(a) + f(b) + 4 * odd + 2 * even);
}

}  // namespace gpr

#endif  // GPR_QUADRATURE_HPP
