#ifndef GPR_GPE1D_HPP
#define GPR_GPE1D_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gpr/errors.hpp"
#include "gpr/spectral.hpp"

namespace gpr {

/// Longitudinal potential V∥(t, x) evaluated on the line y = 0.
template <typename Real>
using LinePotential = std::function<Real(Real t, Real x)>;

/// Complex field on a periodic line.
template <typename Real>
struct Field1D {
  PeriodicAxis<Real> axis;
  VectorC<Real> values;
  Real time = 0;

  Real norm() const { return grid_norm(values, axis.spacing()); }
  VectorR<Real> density() const { return values.cwiseAbs2(); }
  /// max |Φ| over the two outermost samples on each side.
  Real edge_magnitude() const {
    const Eigen::Index n = values.size();
    return std::max({std::abs(values[0]), std::abs(values[1]), std::abs(values[n - 1]), std::abs(values[n - 2])});
  }
};

/// Sample f(x) on the axis as a field at time t.
template <typename Real, typename F>
Field1D<Real> make_field_1d(const PeriodicAxis<Real>& axis, F&& f, Real t = 0) {
  axis.validate();
  Field1D<Real> out{axis, VectorC<Real>(axis.n), t};
  for (Eigen::Index j = 0; j < axis.n; ++j) out.values[j] = f(axis.coord(j));
  return out;
}

template <typename Real>
struct Energy1D {
  Real kinetic = 0;
  Real potential = 0;
  Real interaction = 0;
  Real imaginary_residue = 0;
  Real total() const { return kinetic + potential + interaction; }
};

/// Symmetric split-step integrator for i∂_tΦ = (−∂² + V∥ + b|Φ|²)Φ on one grid.
template <typename Real>
class GpeStepper1D {
 public:
  using Complex = std::complex<Real>;

  GpeStepper1D(const PeriodicAxis<Real>& axis, LinePotential<Real> V, Real b)
      : sp_(axis), x_(axis.coords()), V_(std::move(V)), b_(b) {}

  const PeriodicAxis<Real>& axis() const { return sp_.axis(); }
  Spectral1D<Real>& spectral() { return sp_; }

  void step(Field1D<Real>& phi, Real dt) {
    if (phi.values.size() != axis().n) throw InterfaceError("strang_step: field does not match the stepper grid");
    if (dt != cached_dt_) {
      kinetic_.resize(axis().n);
      for (Eigen::Index j = 0; j < axis().n; ++j) kinetic_[j] = std::polar(Real(1), -sp_.k_squared()[j] * dt);
      cached_dt_ = dt;
    }
    const Real tm = phi.time + dt / 2;
    half_phase(phi, tm, dt);
    sp_.apply_multiplier(phi.values.data(), kinetic_);
    half_phase(phi, tm, dt);
    phi.time += dt;
  }

  Energy1D<Real> energy(const Field1D<Real>& phi) {
    const Real h = axis().spacing();
    const VectorC<Real> lap = sp_.minus_laplacian(phi.values);
    const Complex kin = phi.values.dot(lap) * h;
    Energy1D<Real> e;
    e.kinetic = kin.real();
    e.imaginary_residue = std::abs(kin.imag());
    const VectorR<Real> rho = phi.density();
    for (Eigen::Index j = 0; j < axis().n; ++j) {
      e.potential += V_ ? V_(phi.time, x_[j]) * rho[j] * h : Real(0);
      e.interaction += b_ / 2 * rho[j] * rho[j] * h;
    }
    return e;
  }

 private:
  void half_phase(Field1D<Real>& phi, Real t, Real dt) {
    for (Eigen::Index j = 0; j < axis().n; ++j) {
      const Real v = (V_ ? V_(t, x_[j]) : Real(0)) + b_ * std::norm(phi.values[j]);
      phi.values[j] *= std::polar(Real(1), -v * dt / 2);
    }
  }

  Spectral1D<Real> sp_;
  VectorR<Real> x_;
  LinePotential<Real> V_;
  Real b_;
  Real cached_dt_ = std::numeric_limits<Real>::quiet_NaN();
  VectorC<Real> kinetic_;
};

/// One Strang step: half phase, kinetic e^{−ik²dt}, half phase, with V∥ at the midpoint time.
template <typename Real>
Field1D<Real> strang_step(Field1D<Real> phi, Real dt, const LinePotential<Real>& V, Real b) {
  GpeStepper1D<Real> st(phi.axis, V, b);
  st.step(phi, dt);
  return phi;
}

/// ⟨Φ, (−∂² + V∥(t) + (b/2)|Φ|²)Φ⟩ at the field's time.
template <typename Real>
Energy1D<Real> energy_1d(const Field1D<Real>& phi, const LinePotential<Real>& V, Real b) {
  GpeStepper1D<Real> st(phi.axis, V, b);
  return st.energy(phi);
}

template <typename Real>
struct Schedule1D {
  Real T = 1;
  Real dt = Real(1e-3);
  LinePotential<Real> V;
  Real b = 0;
  int sample_stride = 0;  ///< steps between snapshots (0 keeps only the endpoints)
  int series_stride = 1;  ///< steps between norm/energy samples
};

template <typename Real>
struct Trajectory1D {
  std::vector<Field1D<Real>> snapshots;
  std::vector<Real> times, norms, energies;
  Real dt = 0;
  int steps = 0;
  Real max_norm_step_drift = 0;
  Field1D<Real> final;
};

/// Integrate from phi0.time to phi0.time + T with ⌈T/dt⌉ equal steps.
template <typename Real>
Trajectory1D<Real> evolve_1d(const Field1D<Real>& phi0, const Schedule1D<Real>& s) {
  if (!(s.dt > 0) || !(s.T >= 0)) throw DomainError("evolve_1d: need dt > 0 and T >= 0");
  const int n = static_cast<int>(std::ceil(s.T / s.dt - Real(1e-9)));
  Trajectory1D<Real> out;
  out.steps = n;
  out.dt = n > 0 ? s.T / n : s.dt;
  GpeStepper1D<Real> st(phi0.axis, s.V, s.b);
  Field1D<Real> phi = phi0;
  const Real t0 = phi0.time;
  auto record_series = [&] {
    out.times.push_back(phi.time);
    out.norms.push_back(phi.norm());
    out.energies.push_back(st.energy(phi).total());
  };
  record_series();
  out.snapshots.push_back(phi);
  Real previous_norm = out.norms.back();
  for (int i = 1; i <= n; ++i) {
    st.step(phi, out.dt);
    phi.time = t0 + i * out.dt;
    const Real nrm = phi.norm();
    if (!std::isfinite(nrm) || !phi.values.allFinite())
      throw NumericalError("evolve_1d: non-finite field at step " + std::to_string(i) + " (t = " + num(phi.time) + ")");
    out.max_norm_step_drift = std::max(out.max_norm_step_drift, std::abs(nrm - previous_norm));
    previous_norm = nrm;
    if ((s.series_stride > 0 && i % s.series_stride == 0) || i == n) record_series();
    if ((s.sample_stride > 0 && i % s.sample_stride == 0 && i != n)) out.snapshots.push_back(phi);
  }
  if (n > 0) out.snapshots.push_back(phi);
  out.final = phi;
  return out;
}

template <typename Real>
struct GroundStateControl1D {
  Real tolerance = Real(1e-14);          ///< energy decrement per accepted step
  Real residual_tolerance = Real(1e-9);  ///< ‖(H_Φ − λ)Φ‖
  int max_iterations = 50000;
};

template <typename Real>
struct GroundState1D {
  Field1D<Real> field;
  Real energy = 0;     ///< value of the energy functional
  Real chemical = 0;   ///< λ = ⟨Φ, (−∂² + V + b|Φ|²)Φ⟩
  Real residual = 0;
  int iterations = 0;
};

/// Minimise the energy functional over normalised real profiles.
///
/// Each step takes the lowest Ritz vector of −∂² + V + b|φ|² (density frozen at the current φ) in
/// span{φ, P r, φ − φ_prev}, with r the residual and P = (c − ∂²)⁻¹, and damps the step towards φ
/// until the energy does not rise.
template <typename Real>
GroundState1D<Real> ground_state_1d(const std::function<Real(Real)>& V, Real b, const PeriodicAxis<Real>& axis,
                                    const GroundStateControl1D<Real>& ctl = {}) {
  using Complex = std::complex<Real>;
  axis.validate();
  const Eigen::Index n = axis.n;
  const Real h = axis.spacing();
  Spectral1D<Real> sp(axis);
  const VectorR<Real> x = axis.coords();
  VectorR<Real> v(n);
  for (Eigen::Index j = 0; j < n; ++j) v[j] = V ? V(x[j]) : Real(0);
  if (!v.allFinite()) throw DomainError("ground_state_1d: potential must be finite on the grid");

  auto apply_linear = [&](const VectorR<Real>& u) -> VectorR<Real> {
    return sp.minus_laplacian(u.template cast<Complex>()).real() + v.cwiseProduct(u);
  };
  auto functional = [&](const VectorR<Real>& u, const VectorR<Real>& Lu) {
    return (u.dot(Lu) + b / 2 * u.array().pow(4).sum()) * h;
  };

  const Real s = axis.length / 8;
  VectorR<Real> phi(n);
  for (Eigen::Index j = 0; j < n; ++j) phi[j] = std::exp(-x[j] * x[j] / (2 * s * s));
  phi /= grid_norm(phi, h);
  VectorR<Real> Lphi = apply_linear(phi);
  Real E = functional(phi, Lphi);
  Real res = 0, lambda = 0;
  int it = 0;
  Real decrement = std::numeric_limits<Real>::infinity();
  VectorR<Real> previous;
  for (;; ++it) {
    const VectorR<Real> rho = phi.cwiseAbs2();
    const VectorR<Real> Hphi = Lphi + b * rho.cwiseProduct(phi);
    lambda = phi.dot(Hphi) * h;
    const VectorR<Real> r = Hphi - lambda * phi;
    res = grid_norm(r, h);
    if (!std::isfinite(res)) throw NumericalError("ground_state_1d: non-finite residual");
    if (res < ctl.residual_tolerance && decrement < ctl.tolerance) break;
    if (it >= ctl.max_iterations)
      throw ResolutionError("ground_state_1d: no convergence after " + std::to_string(it) + " iterations (residual " +
                            num(res) + ")");

    const Real shift = std::max<Real>(1, lambda - v.minCoeff());
    VectorC<Real> pr = r.template cast<Complex>();
    sp.apply_multiplier(pr.data(), (sp.k_squared().array() + shift).inverse().matrix().template cast<Complex>());

    // Ritz step for the operator with the density frozen at φ.
    auto apply_frozen = [&](const VectorR<Real>& u) -> VectorR<Real> {
      return apply_linear(u) + b * rho.cwiseProduct(u);
    };
    MatrixR<Real> S(n, 3), HS(n, 3);
    S.col(0) = phi;
    HS.col(0) = Hphi;
    int cols = 1;
    auto push = [&](VectorR<Real> d) {
      const Real scale = grid_norm(d, h);
      if (!(scale > 0)) return;
      for (int pass = 0; pass < 2; ++pass)
        for (int q = 0; q < cols; ++q) d -= (S.col(q).dot(d) * h) * S.col(q);
      const Real nd = grid_norm(d, h);
      if (nd <= Real(1e-10) * scale) return;
      S.col(cols) = d / nd;
      HS.col(cols) = apply_frozen(VectorR<Real>(S.col(cols)));
      ++cols;
    };
    push(pr.real());
    if (previous.size() == n) push(phi - previous);
    MatrixR<Real> A = S.leftCols(cols).transpose() * HS.leftCols(cols) * h;
    A = (A + A.transpose()).eval() / 2;
    Eigen::SelfAdjointEigenSolver<MatrixR<Real>> eig(A);
    VectorR<Real> target = S.leftCols(cols) * eig.eigenvectors().col(0);
    if (target.dot(phi) < 0) target = -target;

    // The frozen-density step can overshoot when b is large; damp it until the energy drops.
    const Real noise = Real(1e-13) * std::max<Real>(1, std::abs(E));
    auto residual_of = [&](const VectorR<Real>& w, const VectorR<Real>& Lw) {
      const VectorR<Real> Hw = Lw + b * w.cwiseAbs2().cwiseProduct(w);
      return grid_norm(VectorR<Real>(Hw - (w.dot(Hw) * h) * w), h);
    };
    VectorR<Real> u, Lu;
    Real Eu = 0;
    bool accepted = false;
    for (Real theta = 1; theta > Real(1e-6); theta /= 2) {
      u = phi + theta * (target - phi);
      u /= grid_norm(u, h);
      Lu = apply_linear(u);
      Eu = functional(u, Lu);
      // Within round-off of E the residual decides.
      if (Eu < E - noise || (Eu <= E + noise && residual_of(u, Lu) < res)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw ResolutionError("ground_state_1d: no descent step (residual " + num(res) + ")");
    decrement = std::max<Real>(0, E - Eu);
    previous = phi;
    phi = u;
    Lphi = Lu;
    E = Eu;
  }

  Eigen::Index imax;
  phi.cwiseAbs().maxCoeff(&imax);
  if (phi[imax] < 0) phi = -phi;
  GroundState1D<Real> out;
  out.field = Field1D<Real>{axis, phi.template cast<Complex>(), Real(0)};
  out.energy = E;
  out.chemical = lambda;
  out.residual = res;
  out.iterations = it;
  return out;
}

}  // namespace gpr

#endif  // GPR_GPE1D_HPP
