#ifndef GPR_TRANSVERSE_HPP
#define GPR_TRANSVERSE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>

#include "gpr/errors.hpp"
#include "gpr/spectral.hpp"

namespace gpr {

/// Sample f(y₁, y₂) on the square grid of `axis` in the flat layout p = i + n·j.
template <typename Real, typename F>
VectorR<Real> sample_2d(const PeriodicAxis<Real>& axis, F&& f) {
  const Eigen::Index n = axis.n;
  VectorR<Real> v(n * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) v[i + n * j] = f(axis.coord(i), axis.coord(j));
  return v;
}

/// Ground state of −Δ + V⊥ on a square periodic grid.
template <typename Real>
struct TransverseMode {
  PeriodicAxis<Real> axis;
  VectorR<Real> chi;  ///< values on `axis`, L²-normalised with cell h²
  Real E0 = 0;        ///< eigenvalue of the operator on `axis` (scaled by ε⁻² once rescaled)
  Real quartic = 0;   ///< ∫|χ|⁴ of the unscaled mode
  Real kinetic = 0;   ///< ⟨χ, −Δχ⟩ on `axis`
  Real potential = 0; ///< ⟨χ, V χ⟩ on `axis`
  Real residual = 0;  ///< ‖(H − E0)χ‖ at exit
  int iterations = 0;
  std::optional<Real> epsilon;

  Real cell() const { return axis.spacing() * axis.spacing(); }
  Real norm() const { return grid_norm(chi, cell()); }
  /// ∫|χ|⁴ of the stored array by the trapezoid rule.
  Real grid_quartic() const { return chi.array().pow(4).sum() * cell(); }
};

template <typename Real>
struct GroundStateControl {
  Real tolerance = Real(1e-13);          ///< energy decrement per step
  Real residual_tolerance = Real(1e-9);  ///< ‖(H − E)χ‖
  Real decay_tolerance = Real(1e-8);     ///< max |χ| on the box boundary
  int max_iterations = 2000;
};

namespace detail {

template <typename Real>
VectorR<Real> apply_transverse(Spectral2D<Real>& sp, const VectorR<Real>& V, const VectorR<Real>& v) {
  using Complex = std::complex<Real>;
  return sp.minus_laplacian(v.template cast<Complex>()).real() + V.cwiseProduct(v);
}

template <typename Real>
Real boundary_max(const PeriodicAxis<Real>& axis, const VectorR<Real>& v) {
  const Eigen::Index n = axis.n;
  Real m = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    m = std::max({m, std::abs(v[t]), std::abs(v[n * t]), std::abs(v[n - 1 + n * t]), std::abs(v[t + n * (n - 1)])});
  }
  return m;
}

}  // namespace detail

/// Minimise the Rayleigh quotient of −Δ + V⊥ by preconditioned gradient flow.
///
/// Each step replaces χ by the lowest Ritz vector in span{χ, P r, χ − χ_prev}, where r is the
/// residual and P = (c − Δ)⁻¹; the quotient therefore never increases.
template <typename Real>
TransverseMode<Real> ground_state_2d(const VectorR<Real>& V, const PeriodicAxis<Real>& axis,
                                     const GroundStateControl<Real>& ctl = {}) {
  axis.validate();
  const Eigen::Index n = axis.n, size = n * n;
  if (V.size() != size) throw InterfaceError("ground_state_2d: potential size does not match grid");
  if (!V.allFinite()) throw DomainError("ground_state_2d: potential must be finite on the grid");
  Spectral2D<Real> sp(axis);
  const Real cell = axis.spacing() * axis.spacing();
  const Real vmin = V.minCoeff();

  // Start from a centred Gaussian a quarter of the box wide.
  const Real s = axis.length / 8;
  VectorR<Real> chi = sample_2d(axis, [s](Real y1, Real y2) { return std::exp(-(y1 * y1 + y2 * y2) / (2 * s * s)); });
  chi /= grid_norm(chi, cell);
  VectorR<Real> Hchi = detail::apply_transverse(sp, V, chi);
  Real E = chi.dot(Hchi) * cell;
  VectorR<Real> previous;
  Real res = 0;
  int it = 0;
  for (;; ++it) {
    const VectorR<Real> r = Hchi - E * chi;
    res = grid_norm(r, cell);
    if (!std::isfinite(res)) throw NumericalError("ground_state_2d: non-finite residual");
    if (it >= ctl.max_iterations)
      throw ResolutionError("ground_state_2d: no convergence after " + std::to_string(it) + " iterations");

    const Real shift = std::max<Real>(1, E - vmin);
    VectorR<Real> pre(size);
    {
      VectorR<Real> m = (sp.k_squared().array() + shift).inverse();
      pre = sp.apply_multiplier(r.template cast<std::complex<Real>>(), m).real();
    }

    // Orthonormal basis of the search space by modified Gram–Schmidt, dropping degenerate directions.
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> S(size, 3), HS(size, 3);
    S.col(0) = chi;
    HS.col(0) = Hchi;
    int cols = 1;
    auto push = [&](VectorR<Real> d) {
      const Real scale = grid_norm(d, cell);
      if (!(scale > 0)) return;
      for (int q = 0; q < cols; ++q) d -= (S.col(q).dot(d) * cell) * S.col(q);
      for (int q = 0; q < cols; ++q) d -= (S.col(q).dot(d) * cell) * S.col(q);
      const Real nd = grid_norm(d, cell);
      if (nd <= Real(1e-10) * scale) return;
      S.col(cols) = d / nd;
      HS.col(cols) = detail::apply_transverse(sp, V, VectorR<Real>(S.col(cols)));
      ++cols;
    };
    push(pre);
    if (previous.size() == size) push(chi - previous);

    const auto Sb = S.leftCols(cols);
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> A = Sb.transpose() * HS.leftCols(cols) * cell;
    A = (A + A.transpose()).eval() / 2;
    Eigen::SelfAdjointEigenSolver<decltype(A)> eig(A);
    const VectorR<Real> c = eig.eigenvectors().col(0);
    const Real E_new = eig.eigenvalues()[0];

    previous = chi;
    chi = Sb * c;
    Hchi = HS.leftCols(cols) * c;
    const Real nrm = grid_norm(chi, cell);
    chi /= nrm;
    Hchi /= nrm;
    const Real decrement = E - E_new;
    E = chi.dot(Hchi) * cell;
    if (decrement < ctl.tolerance && res < ctl.residual_tolerance) break;
  }

  Eigen::Index imax;
  chi.cwiseAbs().maxCoeff(&imax);
  if (chi[imax] < 0) chi = -chi;

  TransverseMode<Real> mode;
  mode.axis = axis;
  mode.chi = chi;
  mode.E0 = E;
  mode.potential = chi.dot(V.cwiseProduct(chi)) * cell;
  mode.kinetic = E - mode.potential;
  mode.residual = res;
  mode.iterations = it;
  mode.quartic = mode.grid_quartic();

  const Real edge = detail::boundary_max(axis, chi);
  if (edge >= ctl.decay_tolerance)
    throw GridTooSmallError("ground_state_2d: mode is " + num(edge) + " at the box boundary");
  return mode;
}

/// b = 8πa ∫|χ|⁴. For a rescaled mode the stored array is checked against ε²∫|χ^ε|⁴ = ∫|χ|⁴.
template <typename Real>
Real coupling_b(Real a, const TransverseMode<Real>& mode) {
  if (a < 0) throw DomainError("coupling_b: scattering length must be non-negative");
  if (std::abs(mode.norm() - 1) > Real(1e-10)) throw InvariantViolation("coupling_b: mode is not normalised");
  if (mode.epsilon) {
    const Real eps = *mode.epsilon;
    const Real scaled = eps * eps * mode.grid_quartic();
    if (std::abs(scaled - mode.quartic) > Real(1e-10) * mode.quartic)
      throw InvariantViolation("coupling_b: rescaled quartic integral disagrees with the unscaled one");
  }
  return 8 * std::numbers::pi_v<Real> * a * mode.quartic;
}

/// χ^ε(y) = ε⁻¹χ(y/ε) on the ε-scaled grid: same samples times ε⁻¹, box and spacing times ε.
template <typename Real>
TransverseMode<Real> rescale_mode(const TransverseMode<Real>& mode, Real eps) {
  if (!(eps > 0)) throw DomainError("rescale_mode: epsilon must be positive");
  TransverseMode<Real> out = mode;
  out.axis.length = mode.axis.length * eps;
  out.chi = mode.chi / eps;
  out.E0 = mode.E0 / (eps * eps);
  out.kinetic = mode.kinetic / (eps * eps);
  out.potential = mode.potential / (eps * eps);
  out.residual = mode.residual / (eps * eps * eps);
  out.epsilon = mode.epsilon.value_or(Real(1)) * eps;
  return out;
}

/// χ^ε resampled onto a given target grid by trigonometric interpolation of the source mode.
///
/// The target spacing must resolve the ε length scale with at least two points per unit ε.
template <typename Real>
TransverseMode<Real> rescale_mode(const TransverseMode<Real>& mode, Real eps, const PeriodicAxis<Real>& target) {
  using Complex = std::complex<Real>;
  target.validate();
  const TransverseMode<Real> scaled = rescale_mode(mode, eps);
  const Real total_eps = *scaled.epsilon;
  if (target.spacing() > total_eps / 2)
    throw ResolutionError("rescale_mode: target spacing " + num(target.spacing()) +
                          " does not resolve epsilon " + num(total_eps));

  const PeriodicAxis<Real>& src = scaled.axis;
  const Eigen::Index n = src.n, m = target.n;
  Spectral2D<Real> sp(src);
  const VectorC<Real> hat = sp.forward(scaled.chi.template cast<Complex>());
  const VectorR<Real> k = src.wavenumbers();

  // Separable evaluation of Σ ĉ_{pq} e^{i k_p (y₁ − y₀)} e^{i k_q (y₂ − y₀)} / n².
  const Real y0 = src.coord(0), half = src.length / 2;
  Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic> E(m, n);
  std::vector<bool> inside(static_cast<std::size_t>(m));
  for (Eigen::Index t = 0; t < m; ++t) {
    const Real y = target.coord(t);
    inside[static_cast<std::size_t>(t)] = y >= -half && y <= half;
    for (Eigen::Index p = 0; p < n; ++p) {
      Real kp = k[p];
      if (n % 2 == 0 && p == n / 2) kp = 0;  // drop the unpaired Nyquist term
      E(t, p) = std::polar(Real(1), kp * (y - y0));
    }
  }
  if (n % 2 == 0) E.col(n / 2).setZero();
  const Eigen::Map<const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>> H(hat.data(), n, n);
  const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic> vals = E * H * E.transpose() / Real(n * n);

  TransverseMode<Real> out = scaled;
  out.axis = target;
  out.chi.resize(m * m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i)
      out.chi[i + m * j] =
          inside[static_cast<std::size_t>(i)] && inside[static_cast<std::size_t>(j)] ? vals(i, j).real() : Real(0);
  return out;
}

}  // namespace gpr

#endif  // GPR_TRANSVERSE_HPP
