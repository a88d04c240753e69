#ifndef GPR_SCATTERING_HPP
#define GPR_SCATTERING_HPP

// Zero-energy two-body scattering for a compactly supported repulsive radial
// interaction in the Gross–Pitaevskii scaling w_μ(r) = μ⁻² w(r/μ), and the
// shell correction U that cuts the scattering solution off at a finite radius R.
//
// Radial reduction throughout: a spherically symmetric h(|z|) is represented by
// h̃(r) = r·h(r), for which (−Δ + ½V)h = 0 becomes h̃'' = ½ V h̃.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "gpr/errors.hpp"
#include "gpr/quadrature.hpp"
#include "gpr/spectral.hpp"

namespace gpr {

/// Spherically symmetric, non-negative interaction profile w(r) supported in r ≤ range ≤ 1.
template <typename Real>
class RadialPotential {
 public:
  enum class Kind { Zero, SquareBarrier, SmoothBump, Tabulated };

  static RadialPotential zero() { return RadialPotential(Kind::Zero, 0, 1); }

  /// V0 · 1_{r ≤ range}.
  static RadialPotential square_barrier(Real V0, Real range = 1) {
    return RadialPotential(Kind::SquareBarrier, V0, range);
  }

  /// V0 · exp(1 − 1/(1 − (r/range)²)) inside the support, C^∞ at the edge.
  static RadialPotential smooth_bump(Real V0, Real range = 1) {
    return RadialPotential(Kind::SmoothBump, V0, range);
  }

  /// Samples w(r_i) at r_i = i·range/(n−1), linearly interpolated; zero beyond range.
  static RadialPotential tabulated(VectorR<Real> samples, Real range) {
    RadialPotential w(Kind::Tabulated, samples.size() ? samples.maxCoeff() : Real(0), range);
    w.samples_ = std::move(samples);
    w.validate();
    return w;
  }

  Kind kind() const { return kind_; }
  Real range() const { return range_; }
  Real sup_bound() const { return kind_ == Kind::Zero ? Real(0) : height_; }
  bool is_zero() const { return kind_ == Kind::Zero || height_ == 0; }

  std::string name() const {
    switch (kind_) {
      case Kind::Zero: return "zero";
      case Kind::SquareBarrier: return "square";
      case Kind::SmoothBump: return "bump";
      case Kind::Tabulated: return "tabulated";
    }
    return "?";
  }

  /// Unscaled profile w(r).
  Real operator()(Real r) const {
    r = std::abs(r);
    if (r > range_) return 0;
    switch (kind_) {
      case Kind::Zero: return 0;
      case Kind::SquareBarrier: return height_;
      case Kind::SmoothBump: {
        const Real x = r / range_;
        if (x >= 1) return 0;
        return height_ * std::exp(1 - 1 / (1 - x * x));
      }
      case Kind::Tabulated: {
        const Eigen::Index n = samples_.size();
        const Real h = range_ / static_cast<Real>(n - 1);
        const Eigen::Index i = std::min<Eigen::Index>(static_cast<Eigen::Index>(r / h), n - 2);
        const Real t = r / h - static_cast<Real>(i);
        return (1 - t) * samples_[i] + t * samples_[i + 1];
      }
    }
    return 0;
  }

  /// w_μ(r) = μ⁻² w(r/μ).
  Real scaled(Real r, Real mu) const { return (*this)(r / mu) / (mu * mu); }

  /// Unscaled radii in (0, range] where w or its derivative may jump.
  std::vector<Real> breakpoints() const {
    std::vector<Real> b;
    if (kind_ == Kind::Tabulated) {
      const Eigen::Index n = samples_.size();
      for (Eigen::Index i = 1; i < n - 1; ++i) b.push_back(range_ * static_cast<Real>(i) / static_cast<Real>(n - 1));
    }
    if (kind_ != Kind::Zero) b.push_back(range_);
    return b;
  }

  /// Profile restricted to the open segment (lo, hi): one-sided limits at the ends.
  Real in_segment(Real r, Real lo, Real hi) const {
    const Real d = (hi - lo) * Real(1e-13);
    return (*this)(std::clamp(r, lo + d, hi - d));
  }

  void validate() const {
    if (!(range_ > 0) || range_ > 1) throw DomainError("interaction range must lie in (0, 1]");
    if (height_ < 0) throw DomainError("interaction must be non-negative");
    if (kind_ == Kind::Tabulated) {
      if (samples_.size() < 2) throw DomainError("tabulated interaction needs at least two samples");
      if (samples_.minCoeff() < 0) throw DomainError("tabulated interaction has negative samples");
    }
  }

 private:
  RadialPotential(Kind kind, Real height, Real range) : kind_(kind), height_(height), range_(range) {
    if (kind_ != Kind::Tabulated) validate();
  }

  Kind kind_;
  Real height_;
  Real range_;
  VectorR<Real> samples_;
};

template <typename Real>
struct StepControl {
  int initial_steps = 2000;  ///< steps across [0, μ] before refinement
  Real tolerance = Real(1e-10);
  int max_halvings = 10;
};

/// Zero-energy scattering solution of w_μ on [0, μ], normalised to unit exterior slope.
template <typename Real>
struct ScatteringSolution {
  RadialPotential<Real> potential = RadialPotential<Real>::zero();
  Real mu = 0;
  Real a_mu = 0;  ///< scattering length of w_μ
  Real a = 0;     ///< a_μ / μ, scattering length of w
  VectorR<Real> r;                ///< nodes on [0, μ]
  VectorR<Real> j_tilde;          ///< j̃ = r·j_μ
  VectorR<Real> j_tilde_prime;    ///< j̃'
  std::vector<Eigen::Index> segment_starts;  ///< node index where each smooth segment starts
  Real integral_discrepancy = 0;  ///< |8πa_μ − 4π∫w_μ j̃ r dr| / (8πa_μ)
  Real refinement_change = 0;     ///< last Richardson difference in scaled state
  int steps = 0;

  /// j̃(r) by cubic Hermite interpolation inside [0, μ], exact r − a_μ outside.
  Real j_tilde_at(Real x) const {
    if (x >= mu) return x - a_mu;
    return hermite(x).first;
  }
  Real j_tilde_prime_at(Real x) const {
    if (x >= mu) return 1;
    return hermite(x).second;
  }
  /// j_μ(r) = j̃(r)/r with the r → 0 limit j̃'(0).
  Real j_at(Real x) const {
    if (x <= 0) return j_tilde_prime[0];
    return j_tilde_at(x) / x;
  }

 private:
  std::pair<Real, Real> hermite(Real x) const {
    const Eigen::Index n = r.size();
    auto it = std::upper_bound(r.data(), r.data() + n, x);
    Eigen::Index i = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(it - r.data()) - 1, 0, n - 2);
    while (i + 1 < n - 1 && r[i + 1] == r[i]) ++i;
    const Real h = r[i + 1] - r[i];
    const Real t = (x - r[i]) / h;
    const Real y0 = j_tilde[i], y1 = j_tilde[i + 1], d0 = j_tilde_prime[i] * h, d1 = j_tilde_prime[i + 1] * h;
    const Real t2 = t * t, t3 = t2 * t;
    const Real val = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * d1;
    const Real der = ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * d0 + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * d1) / h;
    return {val, der};
  }
};

namespace detail {

template <typename Real>
struct RadialTable {
  std::vector<Real> r, f, fp;
  std::vector<Eigen::Index> segment_starts;
};

/// Segment edges on [0, μ]: 0, μ·breakpoints, μ.
template <typename Real>
std::vector<Real> scattering_segments(const RadialPotential<Real>& w, Real mu) {
  std::vector<Real> edges{Real(0)};
  for (Real b : w.breakpoints())
    if (b < 1) edges.push_back(mu * b);
  edges.push_back(mu);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// Classical RK4 for f̃'' = ½ w_μ f̃, f̃(0) = 0, f̃'(0) = 1, piecewise on smooth segments.
template <typename Real>
RadialTable<Real> integrate_radial(const RadialPotential<Real>& w, Real mu, int steps_per_mu) {
  const auto edges = scattering_segments(w, mu);
  RadialTable<Real> t;
  Real f = 0, fp = 1;
  t.r.push_back(0);
  t.f.push_back(f);
  t.fp.push_back(fp);
  for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
    const Real lo = edges[s], hi = edges[s + 1];
    int m = static_cast<int>(std::ceil(steps_per_mu * (hi - lo) / mu));
    m = std::max(m + (m % 2), 2);
    const Real h = (hi - lo) / m;
    auto rhs = [&](Real r) { return w.in_segment(r / mu, lo / mu, hi / mu) / (2 * mu * mu); };
    if (s > 0) {
      t.segment_starts.push_back(static_cast<Eigen::Index>(t.r.size()));
      t.r.push_back(lo);
      t.f.push_back(f);
      t.fp.push_back(fp);
    } else {
      t.segment_starts.push_back(0);
    }
    for (int i = 0; i < m; ++i) {
      const Real r0 = lo + i * h;
      const Real q0 = rhs(r0), qm = rhs(r0 + h / 2), q1 = rhs(r0 + h);
      const Real k1f = fp, k1p = q0 * f;
      const Real k2f = fp + h / 2 * k1p, k2p = qm * (f + h / 2 * k1f);
      const Real k3f = fp + h / 2 * k2p, k3p = qm * (f + h / 2 * k2f);
      const Real k4f = fp + h * k3p, k4p = q1 * (f + h * k3f);
      f += h / 6 * (k1f + 2 * k2f + 2 * k3f + k4f);
      fp += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
      t.r.push_back(i + 1 == m ? hi : lo + (i + 1) * h);
      t.f.push_back(f);
      t.fp.push_back(fp);
      // The equation is linear, so a stiff barrier is handled by rescaling the table so far.
      if (std::abs(fp) > Real(1e100)) {
        const Real c = 1 / std::abs(fp);
        for (auto& v : t.f) v *= c;
        for (auto& v : t.fp) v *= c;
        f *= c;
        fp *= c;
      }
    }
  }
  return t;
}

/// 4π ∫₀^μ w_μ(r) h̃(r) r dr by composite Simpson on each smooth segment of a table.
template <typename Real, typename Values>
Real interaction_moment(const RadialPotential<Real>& w, Real mu, const VectorR<Real>& r, const Values& h_tilde,
                        const std::vector<Eigen::Index>& starts) {
  Real total = 0;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const Eigen::Index b = starts[s];
    const Eigen::Index e = s + 1 < starts.size() ? starts[s + 1] - 1 : r.size() - 1;
    const Real lo = r[b], hi = r[e];
    VectorR<Real> y(e - b + 1);
    for (Eigen::Index i = b; i <= e; ++i)
      y[i - b] = w.in_segment(r[i] / mu, lo / mu, hi / mu) / (mu * mu) * h_tilde[i] * r[i];
    total += simpson_samples(y, (hi - lo) / static_cast<Real>(e - b));
  }
  return 4 * std::numbers::pi_v<Real> * total;
}

}  // namespace detail

/// Solve (−Δ + ½w_μ) j = 0 on [0, μ] and extract the scattering length.
template <typename Real>
ScatteringSolution<Real> solve_zero_energy(const RadialPotential<Real>& w, Real mu, const StepControl<Real>& ctl = {}) {
  if (!(mu > 0)) throw DomainError("solve_zero_energy: mu must be positive");
  w.validate();

  // Normalised end state: f̃/(μ f̃') = 1 − a and the relative slope change across the last segment.
  auto scaled_end = [mu](const detail::RadialTable<Real>& t) {
    const Real first = t.fp[static_cast<std::size_t>(t.segment_starts.back())];
    return std::pair<Real, Real>{t.f.back() / (mu * t.fp.back()), first / t.fp.back()};
  };

  int steps = ctl.initial_steps;
  auto coarse = detail::integrate_radial(w, mu, steps);
  auto fine = detail::integrate_radial(w, mu, 2 * steps);
  Real change = 0;
  for (int halving = 0;; ++halving) {
    const auto [fc, pc] = scaled_end(coarse);
    const auto [ff, pf] = scaled_end(fine);
    change = std::max(std::abs(fc - ff), std::abs(pc - pf));
    if (!std::isfinite(change)) throw ResolutionError("solve_zero_energy: non-finite ODE state");
    if (change <= ctl.tolerance) break;
    if (halving >= ctl.max_halvings)
      throw ResolutionError("solve_zero_energy: step halving did not converge (last change " +
                            num(change) + ")");
    steps *= 2;
    coarse = std::move(fine);
    fine = detail::integrate_radial(w, mu, 2 * steps);
  }

  const Real slope = fine.fp.back();
  if (!(slope > 0)) throw DomainError("solve_zero_energy: non-positive exterior slope (bound state or attractive w)");

  ScatteringSolution<Real> sol;
  sol.potential = w;
  sol.mu = mu;
  sol.steps = 2 * steps;
  sol.refinement_change = change;
  sol.segment_starts = fine.segment_starts;
  const Eigen::Index n = static_cast<Eigen::Index>(fine.r.size());
  sol.r = Eigen::Map<const VectorR<Real>>(fine.r.data(), n);
  sol.j_tilde = Eigen::Map<const VectorR<Real>>(fine.f.data(), n) / slope;
  sol.j_tilde_prime = Eigen::Map<const VectorR<Real>>(fine.fp.data(), n) / slope;
  sol.a_mu = mu - fine.f.back() / slope;
  if (w.is_zero()) sol.a_mu = 0;
  sol.a = sol.a_mu / mu;

  const Real moment = detail::interaction_moment(w, mu, sol.r, sol.j_tilde, sol.segment_starts);
  const Real target = 8 * std::numbers::pi_v<Real> * sol.a_mu;
  sol.integral_discrepancy = target == 0 ? std::abs(moment) : std::abs(target - moment) / target;
  return sol;
}

template <typename Real>
struct BisectionControl {
  Real relative_tolerance = Real(1e-12);
  int scan_points = 256;  ///< coarse scan resolution over one quarter period
};

/// Shell correction (U_β̃, f_β̃) built on a scattering solution.
///
/// f̃ = κ j̃ on [0, μ^β̃]; κ[A sin(ur) + B cos(ur)] on (μ^β̃, R); r beyond R.
template <typename Real>
struct CorrectionProfile {
  ScatteringSolution<Real> inner;
  Real beta_tilde = 0;
  Real mu = 0;
  Real a = 0;
  Real inner_radius = 0;  ///< μ^β̃
  Real U_height = 0;      ///< μ^{1−3β̃} a
  Real u = 0;             ///< √(U_height / 2)
  Real A = 0;
  Real B = 0;
  Real r_max = 0;  ///< first maximum of the shell solution
  Real R = 0;
  Real kappa = 1;
  Real tangency_value_residual = 0;  ///< |f̃(R) − R| / R
  Real tangency_slope_residual = 0;  ///< |f̃'(R) − 1|
  bool degenerate = false;           ///< w ≡ 0: U ≡ 0 and f ≡ 1

  /// Upper end of the admissible κ window, μ^β̃ / (μ^β̃ − μa).
  Real kappa_upper() const { return inner_radius / (inner_radius - mu * a); }

  Real U(Real r) const { return (!degenerate && r > inner_radius && r < R) ? U_height : Real(0); }

  /// f̃ = r·f_β̃.
  Real f_tilde(Real r) const {
    if (degenerate || r >= R) return r;
    if (r <= inner_radius) return kappa * inner.j_tilde_at(r);
    return kappa * (A * std::sin(u * r) + B * std::cos(u * r));
  }
  Real f_tilde_prime(Real r) const {
    if (degenerate || r >= R) return 1;
    if (r <= inner_radius) return kappa * inner.j_tilde_prime_at(r);
    return kappa * u * (A * std::cos(u * r) - B * std::sin(u * r));
  }
};

/// Construct U_β̃ and f_β̃ from the scattering solution of w_μ.
template <typename Real>
CorrectionProfile<Real> build_correction(const ScatteringSolution<Real>& sol, Real beta_tilde,
                                         const BisectionControl<Real>& ctl = {}) {
  if (!(beta_tilde > Real(1) / 3 && beta_tilde < 1)) throw DomainError("build_correction: beta_tilde must lie in (1/3, 1)");
  CorrectionProfile<Real> c;
  c.inner = sol;
  c.beta_tilde = beta_tilde;
  c.mu = sol.mu;
  c.a = sol.a;
  c.inner_radius = std::pow(sol.mu, beta_tilde);
  const Real m = c.inner_radius;
  if (!(sol.mu * sol.a < m)) throw DomainError("build_correction: need mu*a < mu^beta_tilde (mu too large)");

  if (sol.a_mu == 0) {
    c.degenerate = true;
    c.R = m;
    c.r_max = m;
    return c;
  }

  c.U_height = std::pow(sol.mu, 1 - 3 * beta_tilde) * sol.a;
  c.u = std::sqrt(c.U_height / 2);
  const Real u = c.u;
  const Real edge = m - sol.mu * sol.a;
  c.A = edge * std::sin(m * u) + std::cos(m * u) / u;
  c.B = edge * std::cos(m * u) - std::sin(m * u) / u;
  const Real A = c.A, B = c.B;

  auto slope_factor = [&](Real r) { return A * std::cos(u * r) - B * std::sin(u * r); };
  auto value_factor = [&](Real r) { return A * std::sin(u * r) + B * std::cos(u * r); };
  auto phi = [&](Real r) { return u * r * slope_factor(r) - value_factor(r); };

  auto bisect = [&](auto&& g, Real lo, Real hi) {
    Real glo = g(lo);
    for (int it = 0; it < 400; ++it) {
      const Real mid = lo + (hi - lo) / 2;
      if (mid <= lo || mid >= hi || (hi - lo) <= ctl.relative_tolerance * hi) break;
      const Real gm = g(mid);
      if ((gm > 0) == (glo > 0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    return lo + (hi - lo) / 2;
  };

  // r_max: first zero of the slope factor beyond μ^β̃, found within half a period.
  {
    const Real half_period = std::numbers::pi_v<Real> / u;
    const int n = 2 * ctl.scan_points;
    Real lo = m, hi = m;
    bool found = false;
    for (int i = 1; i <= n; ++i) {
      hi = m + half_period * static_cast<Real>(i) / n;
      if (slope_factor(hi) <= 0) {
        found = true;
        break;
      }
      lo = hi;
    }
    if (!found) throw InvariantViolation("build_correction: shell solution has no maximum within half a period");
    c.r_max = bisect(slope_factor, lo, hi);
  }

  const Real phi_lo = phi(m), phi_hi = phi(c.r_max);
  if (!(phi_lo > 0 && phi_hi < 0))
    throw InvariantViolation("build_correction: tangency bracket has no sign change");
  c.R = bisect(phi, m, c.r_max);
  c.kappa = c.R / value_factor(c.R);
  if (!(c.kappa > 1 && c.kappa < c.kappa_upper()))
    throw ConstructionError("build_correction: kappa outside (1, mu^bt/(mu^bt - mu a))");

  c.tangency_value_residual = std::abs(c.f_tilde(c.R * (1 - std::numeric_limits<Real>::epsilon())) - c.R) / c.R;
  c.tangency_slope_residual = std::abs(c.kappa * u * slope_factor(c.R) - 1);
  return c;
}

/// (f_β̃(r), g_β̃(r)) with g = 1 − f.
template <typename Real>
std::pair<Real, Real> eval_scattering_pair(const CorrectionProfile<Real>& c, Real r) {
  if (r < 0 || std::isnan(r)) throw DomainError("eval_scattering_pair: r must be non-negative");
  Real f;
  if (c.degenerate || r >= c.R)
    f = 1;
  else if (r == 0)
    f = c.kappa * c.inner.j_tilde_prime[0];
  else
    f = std::min<Real>(c.f_tilde(r) / r, 1);
  return {f, 1 - f};
}

/// The two halves of ∫(w_μ − U)f dz: interaction part ∫w_μ f and correction part ∫U f.
template <typename Real>
struct NeutralityParts {
  Real interaction = 0;
  Real correction = 0;
  Real residual() const { return interaction - correction; }
};

/// ∫ w_μ f_β̃ dz and ∫ U_β̃ f_β̃ dz by radial Simpson quadrature on their smooth segments.
template <typename Real>
NeutralityParts<Real> neutrality_parts(const CorrectionProfile<Real>& c, const RadialPotential<Real>& w,
                                       int shell_intervals = 4000) {
  NeutralityParts<Real> p;
  const auto& s = c.inner;
  VectorR<Real> f_tilde = c.kappa * s.j_tilde;
  if (c.degenerate) f_tilde = s.r;
  p.interaction = detail::interaction_moment(w, s.mu, s.r, f_tilde, s.segment_starts);
  if (!c.degenerate) {
    auto integrand = [&](Real r) { return c.U_height * c.f_tilde(r) * r; };
    p.correction = 4 * std::numbers::pi_v<Real> * simpson(integrand, c.inner_radius, c.R, shell_intervals);
  }
  return p;
}

/// ∫(w_μ − U_β̃) f_β̃ dz, which vanishes by construction.
template <typename Real>
Real neutrality_residual(const CorrectionProfile<Real>& c, const RadialPotential<Real>& w) {
  return neutrality_parts(c, w).residual();
}

/// μ⁻¹ ∫ U_β̃ f_β̃ dz; equals κ·8πa, multiplied by ∫|χ|⁴ it is the correction coupling.
template <typename Real>
Real correction_coupling(const CorrectionProfile<Real>& c, int shell_intervals = 4000) {
  if (c.degenerate) return 0;
  auto integrand = [&](Real r) { return c.U_height * c.f_tilde(r) * r; };
  return 4 * std::numbers::pi_v<Real> * simpson(integrand, c.inner_radius, c.R, shell_intervals) / c.mu;
}

template <typename Real>
struct GDiagnostics {
  Real l2_norm = 0;
  bool sup_check = true;
  Real worst_ratio = 0;  ///< max over the log grid of g(r) / (μa/r)
};

/// ‖g_β̃‖_{L²(ℝ³)} and the pointwise bound g(r) ≤ μa/r on a logarithmic grid.
template <typename Real>
GDiagnostics<Real> g_norm_diagnostics(const CorrectionProfile<Real>& c, int log_points = 2000,
                                      int intervals_per_segment = 4000) {
  GDiagnostics<Real> d;
  if (c.degenerate) return d;
  auto g = [&](Real r) { return eval_scattering_pair(c, r).second; };
  auto integrand = [&](Real r) {
    const Real v = g(r);
    return v * v * r * r;
  };
  const Real pi = std::numbers::pi_v<Real>;
  const Real edges[] = {Real(0), c.mu, c.inner_radius, c.R};
  Real total = 0;
  for (int s = 0; s < 3; ++s) total += simpson(integrand, edges[s], edges[s + 1], intervals_per_segment);
  d.l2_norm = std::sqrt(4 * pi * total);

  const Real bound_scale = c.mu * c.a;
  const Real r0 = c.mu * Real(1e-4), r1 = c.R * 4;
  for (int i = 0; i < log_points; ++i) {
    const Real r = r0 * std::pow(r1 / r0, static_cast<Real>(i) / (log_points - 1));
    const Real ratio = g(r) * r / bound_scale;
    d.worst_ratio = std::max(d.worst_ratio, ratio);
    if (ratio > 1 + Real(1e-12)) d.sup_check = false;
  }
  return d;
}

}  // namespace gpr

#endif  // GPR_SCATTERING_HPP
