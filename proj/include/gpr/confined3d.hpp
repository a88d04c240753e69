#ifndef GPR_CONFINED3D_HPP
#define GPR_CONFINED3D_HPP

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gpr/errors.hpp"
#include "gpr/gpe1d.hpp"
#include "gpr/spectral.hpp"
#include "gpr/transverse.hpp"

namespace gpr {

/// V∥(t, x, y₁, y₂) in physical coordinates.
template <typename Real>
using SpacePotential = std::function<Real(Real t, Real x, Real y1, Real y2)>;

/// Dense spectral eigenbasis of −Δ + V⊥ on the unscaled transverse grid.
///
/// The ε-confined operator −Δ_y + ε⁻²V⊥(y/ε) on the ε-scaled grid is ε⁻² times this matrix, so one
/// decomposition serves every ε.
template <typename Real>
struct TransverseBasis {
  PeriodicAxis<Real> axis;
  VectorR<Real> eigenvalues;
  MatrixR<Real> Q;  ///< orthonormal eigenvectors (Euclidean), columns in ascending order
  MatrixR<Real> H;
  TransverseMode<Real> mode;
};

template <typename Real>
TransverseBasis<Real> transverse_basis(const VectorR<Real>& V, const PeriodicAxis<Real>& axis,
                                       Real decay_tolerance = Real(1e-8)) {
  using Complex = std::complex<Real>;
  axis.validate();
  const Eigen::Index n = axis.n, size = n * n;
  if (V.size() != size) throw InterfaceError("transverse_basis: potential size does not match grid");

  // One-dimensional spectral −∂² as a dense matrix, then the Kronecker sum for the square grid.
  Spectral1D<Real> line(axis);
  MatrixR<Real> D(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    VectorC<Real> e = VectorC<Real>::Zero(n);
    e[c] = Complex(1);
    D.col(c) = line.minus_laplacian(e).real();
  }
  D = (D + D.transpose()).eval() / 2;
  TransverseBasis<Real> out;
  out.axis = axis;
  out.H = MatrixR<Real>::Zero(size, size);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index p = i + n * j;
      for (Eigen::Index t = 0; t < n; ++t) {
        out.H(p, t + n * j) += D(i, t);
        out.H(p, i + n * t) += D(j, t);
      }
      out.H(p, p) += V[p];
    }
  Eigen::SelfAdjointEigenSolver<MatrixR<Real>> eig(out.H);
  if (eig.info() != Eigen::Success) throw NumericalError("transverse_basis: eigendecomposition failed");
  out.eigenvalues = eig.eigenvalues();
  out.Q = eig.eigenvectors();

  const Real h = axis.spacing();
  auto& m = out.mode;
  m.axis = axis;
  m.chi = out.Q.col(0) / h;
  Eigen::Index imax;
  m.chi.cwiseAbs().maxCoeff(&imax);
  if (m.chi[imax] < 0) m.chi = -m.chi;
  m.E0 = out.eigenvalues[0];
  m.potential = m.chi.dot(V.cwiseProduct(m.chi)) * h * h;
  m.kinetic = m.E0 - m.potential;
  m.residual = grid_norm(VectorR<Real>(out.H * m.chi - m.E0 * m.chi), h * h);
  m.quartic = m.grid_quartic();
  const Real edge = detail::boundary_max(axis, m.chi);
  if (edge >= decay_tolerance)
    throw GridTooSmallError("transverse_basis: mode is " + num(edge) + " at the box boundary");
  return out;
}

/// ψ(x, y) stored as an nx × ny² matrix (x fastest) on the physical ε-scaled transverse grid.
template <typename Real>
struct Field3D {
  PeriodicAxis<Real> x_axis;
  PeriodicAxis<Real> y_axis;
  Real epsilon = 1;
  MatrixC<Real> values;
  Real time = 0;

  Real cell() const { return x_axis.spacing() * y_axis.spacing() * y_axis.spacing(); }
  Real norm() const { return std::sqrt(values.squaredNorm() * cell()); }
};

namespace detail {

template <typename Real>
void check_transverse_resolution(const PeriodicAxis<Real>& y_axis, Real eps) {
  if (!(eps > 0)) throw DomainError("Field3D: epsilon must be positive");
  // Eight points across the band |y| ≤ 2ε.
  if (y_axis.spacing() > eps / 2)
    throw ConstructionError("Field3D: transverse spacing " + num(y_axis.spacing()) + " does not resolve epsilon " +
                            num(eps));
}

}  // namespace detail

/// ψ(x, y) = Φ(x) χ^ε(y) on the grid of the rescaled mode.
template <typename Real>
Field3D<Real> factorised_field(const Field1D<Real>& phi, const TransverseMode<Real>& mode_eps) {
  if (!mode_eps.epsilon) throw InterfaceError("factorised_field: mode must be rescaled to epsilon");
  detail::check_transverse_resolution(mode_eps.axis, *mode_eps.epsilon);
  Field3D<Real> f;
  f.x_axis = phi.axis;
  f.y_axis = mode_eps.axis;
  f.epsilon = *mode_eps.epsilon;
  f.time = phi.time;
  f.values = phi.values * mode_eps.chi.transpose().template cast<std::complex<Real>>();
  return f;
}

/// Sample ψ(x, y₁, y₂) on a grid; the transverse axis must resolve ε.
template <typename Real, typename F>
Field3D<Real> make_field_3d(const PeriodicAxis<Real>& x_axis, const PeriodicAxis<Real>& y_axis, Real eps, F&& f,
                            Real t = 0) {
  x_axis.validate();
  y_axis.validate();
  detail::check_transverse_resolution(y_axis, eps);
  const Eigen::Index ny = y_axis.n;
  Field3D<Real> out{x_axis, y_axis, eps, MatrixC<Real>(x_axis.n, ny * ny), t};
  for (Eigen::Index j = 0; j < ny; ++j)
    for (Eigen::Index i = 0; i < ny; ++i)
      for (Eigen::Index ix = 0; ix < x_axis.n; ++ix)
        out.values(ix, i + ny * j) = f(x_axis.coord(ix), y_axis.coord(i), y_axis.coord(j));
  return out;
}

template <typename Real>
struct ConfinedParams {
  Real a = 0;
  SpacePotential<Real> V_par;  ///< empty means V∥ ≡ 0
  bool time_dependent = false;
};

template <typename Real>
struct Energy3D {
  Real kinetic_x = 0;
  Real transverse = 0;  ///< ⟨ψ, (−Δ_y + ε⁻²V⊥(y/ε))ψ⟩
  Real potential = 0;
  Real interaction = 0;
  Real total() const { return kinetic_x + transverse + potential + interaction; }
};

/// Split-step integrator for i∂_tψ = (−Δ + ε⁻²V⊥(y/ε) + V∥ + 8πaε²|ψ|²)ψ.
///
/// The linear part −∂²_x + (−Δ_y + ε⁻²V⊥) is applied exactly: a Fourier multiplier in x and the
/// dense transverse propagator Q e^{−iΛdt/ε²} Qᵀ. V∥ and the cubic term form the symmetric half steps.
template <typename Real>
class ConfinedStepper3D {
 public:
  using Complex = std::complex<Real>;

  ConfinedStepper3D(const TransverseBasis<Real>& basis, const PeriodicAxis<Real>& x_axis, Real eps,
                    ConfinedParams<Real> params)
      : basis_(basis), line_(x_axis), eps_(eps), params_(std::move(params)) {
    detail::check_transverse_resolution(y_axis(), eps);
    if (params_.a < 0) throw DomainError("ConfinedStepper3D: scattering length must be non-negative");
    if (params_.V_par && !params_.time_dependent) V_ = sample_potential(0);
  }

  PeriodicAxis<Real> y_axis() const { return PeriodicAxis<Real>{basis_.axis.n, basis_.axis.length * eps_}; }
  Real epsilon() const { return eps_; }
  /// Mean-field coupling g = 8πaε².
  Real coupling() const { return 8 * std::numbers::pi_v<Real> * params_.a * eps_ * eps_; }

  void step(Field3D<Real>& psi, Real dt) {
    check(psi);
    if (dt != cached_dt_) prepare(dt);
    const Real tm = psi.time + dt / 2;
    if (params_.V_par && params_.time_dependent) V_ = sample_potential(tm);
    half_phase(psi, dt);
    for (Eigen::Index p = 0; p < psi.values.cols(); ++p) line_.apply_multiplier(psi.values.col(p).data(), kinetic_);
    scratch_.noalias() = psi.values * U_.transpose();
    psi.values.swap(scratch_);
    half_phase(psi, dt);
    psi.time += dt;
  }

  Energy3D<Real> energy(const Field3D<Real>& psi) {
    check(psi);
    Energy3D<Real> e;
    const Real cell = psi.cell();
    const VectorR<Real>& k2 = line_.k_squared();
    VectorC<Real> hat(psi.values.rows());
    for (Eigen::Index p = 0; p < psi.values.cols(); ++p) {
      line_.forward(psi.values.col(p).data(), hat.data());
      e.kinetic_x += (hat.cwiseAbs2().array() * k2.array()).sum() / static_cast<Real>(hat.size()) * cell;
    }
    const MatrixC<Real> Hy = psi.values * basis_.H.transpose().template cast<Complex>();
    e.transverse = (psi.values.conjugate().cwiseProduct(Hy)).sum().real() * cell / (eps_ * eps_);
    const MatrixR<Real> rho = psi.values.cwiseAbs2();
    if (params_.V_par) {
      const MatrixR<Real> V = params_.time_dependent ? sample_potential(psi.time) : V_;
      e.potential = rho.cwiseProduct(V).sum() * cell;
    }
    e.interaction = coupling() / 2 * rho.cwiseAbs2().sum() * cell;
    return e;
  }

 private:
  void check(const Field3D<Real>& psi) const {
    if (!same_axis(psi.x_axis, line_.axis()) || !same_axis(psi.y_axis, y_axis()) ||
        std::abs(psi.epsilon - eps_) > Real(1e-12) * eps_)
      throw InterfaceError("ConfinedStepper3D: field grid does not match the stepper");
  }

  void prepare(Real dt) {
    kinetic_.resize(line_.axis().n);
    for (Eigen::Index j = 0; j < line_.axis().n; ++j) kinetic_[j] = std::polar(Real(1), -line_.k_squared()[j] * dt);
    VectorC<Real> phase(basis_.eigenvalues.size());
    for (Eigen::Index q = 0; q < phase.size(); ++q)
      phase[q] = std::polar(Real(1), -basis_.eigenvalues[q] * dt / (eps_ * eps_));
    const MatrixC<Real> Qc = basis_.Q.template cast<Complex>();
    U_ = Qc * phase.asDiagonal() * Qc.transpose();
    cached_dt_ = dt;
  }

  MatrixR<Real> sample_potential(Real t) const {
    const PeriodicAxis<Real> xa = line_.axis(), ya = y_axis();
    const Eigen::Index ny = ya.n;
    MatrixR<Real> V(xa.n, ny * ny);
    for (Eigen::Index j = 0; j < ny; ++j)
      for (Eigen::Index i = 0; i < ny; ++i)
        for (Eigen::Index ix = 0; ix < xa.n; ++ix) V(ix, i + ny * j) = params_.V_par(t, xa.coord(ix), ya.coord(i), ya.coord(j));
    return V;
  }

  void half_phase(Field3D<Real>& psi, Real dt) {
    const Real g = coupling();
    const bool has_v = static_cast<bool>(params_.V_par);
    for (Eigen::Index p = 0; p < psi.values.cols(); ++p)
      for (Eigen::Index ix = 0; ix < psi.values.rows(); ++ix) {
        Complex& z = psi.values(ix, p);
        const Real v = (has_v ? V_(ix, p) : Real(0)) + g * std::norm(z);
        z *= std::polar(Real(1), -v * dt / 2);
      }
  }

  const TransverseBasis<Real>& basis_;
  Spectral1D<Real> line_;
  Real eps_;
  ConfinedParams<Real> params_;
  MatrixR<Real> V_;
  Real cached_dt_ = std::numeric_limits<Real>::quiet_NaN();
  VectorC<Real> kinetic_;
  MatrixC<Real> U_;
  MatrixC<Real> scratch_;
};

template <typename Real>
struct Schedule3D {
  Real T = 1;
  Real dt = Real(1e-3);
  int series_stride = 10;  ///< steps between norm/energy samples
  int sample_stride = 0;   ///< steps between snapshots (0 keeps only the endpoints)
};

template <typename Real>
struct Trajectory3D {
  std::vector<Real> times, norms, energies;
  std::vector<Field3D<Real>> snapshots;
  Field3D<Real> final;
  Real dt = 0;
  int steps = 0;
  Real max_norm_step_drift = 0;

  Real energy_drift() const {
    Real d = 0;
    for (Real e : energies) d = std::max(d, std::abs(e - energies.front()));
    return d;
  }
};

template <typename Real>
Trajectory3D<Real> evolve_3d(const Field3D<Real>& psi0, ConfinedStepper3D<Real>& stepper, const Schedule3D<Real>& s) {
  if (!(s.dt > 0) || !(s.T >= 0)) throw DomainError("evolve_3d: need dt > 0 and T >= 0");
  if (std::abs(psi0.norm() - 1) > Real(1e-10)) throw DomainError("evolve_3d: initial state is not normalised");
  const int n = static_cast<int>(std::ceil(s.T / s.dt - Real(1e-9)));
  Trajectory3D<Real> out;
  out.steps = n;
  out.dt = n > 0 ? s.T / n : s.dt;
  Field3D<Real> psi = psi0;
  const Real t0 = psi0.time;
  auto record = [&] {
    out.times.push_back(psi.time);
    out.norms.push_back(psi.norm());
    out.energies.push_back(stepper.energy(psi).total());
  };
  record();
  out.snapshots.push_back(psi);
  Real previous = out.norms.back();
  for (int i = 1; i <= n; ++i) {
    stepper.step(psi, out.dt);
    psi.time = t0 + i * out.dt;
    const Real nrm = psi.norm();
    if (!std::isfinite(nrm))
      throw NumericalError("evolve_3d: non-finite field at step " + std::to_string(i) + " (t = " + num(psi.time) + ")");
    out.max_norm_step_drift = std::max(out.max_norm_step_drift, std::abs(nrm - previous));
    previous = nrm;
    if ((s.series_stride > 0 && i % s.series_stride == 0) || i == n) record();
    if (s.sample_stride > 0 && i % s.sample_stride == 0 && i != n) out.snapshots.push_back(psi);
  }
  if (n > 0) out.snapshots.push_back(psi);
  out.final = std::move(psi);
  return out;
}

template <typename Real>
struct ProfileExtraction {
  Field1D<Real> profile;
  Real orthogonal_mass = 0;
};

/// Φ_eff(x) = e^{iE₀t/ε²} ∫χ^ε(y) ψ(x, y) dy and the mass 1 − ‖Φ_eff‖² left in excited transverse modes.
template <typename Real>
ProfileExtraction<Real> extract_profile(const Field3D<Real>& psi, const TransverseMode<Real>& mode_eps) {
  using Complex = std::complex<Real>;
  if (!mode_eps.epsilon || std::abs(*mode_eps.epsilon - psi.epsilon) > Real(1e-12) * psi.epsilon ||
      !same_axis(mode_eps.axis, psi.y_axis) || mode_eps.chi.size() != psi.values.cols())
    throw InterfaceError("extract_profile: mode and field grids differ");
  const Real hy = psi.y_axis.spacing();
  ProfileExtraction<Real> out;
  out.profile.axis = psi.x_axis;
  out.profile.time = psi.time;
  // mode_eps.E0 already carries the ε⁻² scaling.
  out.profile.values = psi.values * mode_eps.chi.template cast<Complex>() * (hy * hy) *
                       std::polar(Real(1), mode_eps.E0 * psi.time);
  const Real total = psi.values.squaredNorm() * psi.cell();
  out.orthogonal_mass = std::clamp<Real>(total - out.profile.values.squaredNorm() * psi.x_axis.spacing(), 0, 1);
  return out;
}

/// ‖e^{iθ}u − v‖ with θ maximising Re⟨e^{iθ}u, v⟩.
template <typename Real>
Real aligned_distance(const Field1D<Real>& u, const Field1D<Real>& v) {
  if (!same_axis(u.axis, v.axis)) throw InterfaceError("aligned_distance: grids differ");
  const std::complex<Real> ov = u.values.dot(v.values);
  const std::complex<Real> rot = std::abs(ov) > 0 ? ov / std::abs(ov) : std::complex<Real>(1);
  return grid_norm(VectorC<Real>(rot * u.values - v.values), u.axis.spacing());
}

template <typename Real>
struct ReductionScenario {
  PeriodicAxis<Real> x_axis{128, 16};
  PeriodicAxis<Real> scaled_axis{28, 12};  ///< transverse grid in units of ε
  std::function<Real(Real, Real)> V_perp;  ///< unscaled V⊥(y₁, y₂)
  SpacePotential<Real> V_par;
  bool time_dependent = false;
  Real a = 0;
  Real T = 1;
  Real dt_factor = Real(0.1);  ///< dt = dt_factor·ε²
  std::function<std::complex<Real>(Real)> phi0;
  Real decay_tolerance = Real(1e-8);
  int jobs = 1;
  bool keep_fields = false;  ///< retain the final 3D field and 1D profile of every run
};

template <typename Real>
struct ReductionRow {
  Real epsilon = 0;
  Real error = 0;
  Real orthogonal_mass = 0;
  Real dt = 0;
  int steps = 0;
  Real norm_drift = 0;
  Real energy_drift = 0;
  Real seconds = 0;
  std::optional<Field3D<Real>> field;
  std::optional<Field1D<Real>> profile;
};

template <typename Real>
struct ReductionTable {
  std::vector<ReductionRow<Real>> rows;
  Real b = 0;
  Real quartic = 0;
  Real E0 = 0;

  /// err(ε_{i+1})/err(ε_i) along the sweep.
  std::vector<Real> ratios() const {
    std::vector<Real> r;
    for (std::size_t i = 1; i < rows.size(); ++i) r.push_back(rows[i].error / rows[i - 1].error);
    return r;
  }
  bool error_decreasing() const {
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (!(rows[i].error < rows[i - 1].error)) return false;
    return true;
  }
  bool orthogonal_mass_decreasing() const {
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (!(rows[i].orthogonal_mass < rows[i - 1].orthogonal_mass)) return false;
    return true;
  }
};

/// Evolve ψ₀ = Φ₀χ^ε in 3D and Φ₀ under the 1D equation with b = 8πa∫|χ|⁴, and compare at T.
template <typename Real>
ReductionRow<Real> reduction_run(const ReductionScenario<Real>& sc, const TransverseBasis<Real>& basis, Real eps) {
  const auto start = std::chrono::steady_clock::now();
  const TransverseMode<Real> mode_eps = rescale_mode(basis.mode, eps);
  Field1D<Real> phi = make_field_1d(sc.x_axis, sc.phi0);
  phi.values /= phi.norm();
  Field3D<Real> psi = factorised_field(phi, mode_eps);
  psi.values /= psi.norm();

  ConfinedParams<Real> params{sc.a, sc.V_par, sc.time_dependent};
  ConfinedStepper3D<Real> stepper(basis, sc.x_axis, eps, params);
  Schedule3D<Real> sched;
  sched.T = sc.T;
  sched.dt = sc.dt_factor * eps * eps;
  sched.series_stride = std::max(1, static_cast<int>(std::ceil(Real(0.05) / sched.dt)));
  const auto tr = evolve_3d(psi, stepper, sched);

  Schedule1D<Real> s1;
  s1.T = sc.T;
  s1.dt = sched.dt;
  s1.series_stride = 0;
  if (sc.V_par) {
    const auto V = sc.V_par;
    s1.V = [V](Real t, Real x) { return V(t, x, Real(0), Real(0)); };
  }
  s1.b = 8 * std::numbers::pi_v<Real> * sc.a * basis.mode.quartic;
  const auto t1 = evolve_1d(phi, s1);

  const auto ext = extract_profile(tr.final, mode_eps);
  ReductionRow<Real> row;
  row.epsilon = eps;
  row.error = aligned_distance(ext.profile, t1.final);
  row.orthogonal_mass = ext.orthogonal_mass;
  row.dt = tr.dt;
  row.steps = tr.steps;
  row.norm_drift = std::abs(tr.norms.back() - tr.norms.front());
  row.energy_drift = tr.energy_drift();
  if (sc.keep_fields) {
    row.field = tr.final;
    row.profile = t1.final;
  }
  row.seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - start).count();
  return row;
}

template <typename Real>
ReductionTable<Real> reduction_sweep(const ReductionScenario<Real>& sc, const std::vector<Real>& eps_list) {
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0)) throw DomainError("reduction_sweep: epsilon must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw DomainError("reduction_sweep: epsilon list must decrease");
  }
  if (!sc.phi0 || !sc.V_perp) throw DomainError("reduction_sweep: scenario needs phi0 and V_perp");
  const TransverseBasis<Real> basis =
      transverse_basis(sample_2d(sc.scaled_axis, sc.V_perp), sc.scaled_axis, sc.decay_tolerance);
  ReductionTable<Real> table;
  table.quartic = basis.mode.quartic;
  table.E0 = basis.mode.E0;
  table.b = 8 * std::numbers::pi_v<Real> * sc.a * basis.mode.quartic;
  table.rows.resize(eps_list.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, sc.jobs));
  for (std::size_t begin = 0; begin < eps_list.size(); begin += jobs) {
    std::vector<std::future<ReductionRow<Real>>> pending;
    for (std::size_t i = begin; i < std::min(begin + jobs, eps_list.size()); ++i)
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                   [&, i] { return reduction_run(sc, basis, eps_list[i]); }));
    for (std::size_t i = 0; i < pending.size(); ++i) table.rows[begin + i] = pending[i].get();
  }
  return table;
}

}  // namespace gpr

#endif  // GPR_CONFINED3D_HPP
