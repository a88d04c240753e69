#ifndef GPR_MANYBODY_HPP
#define GPR_MANYBODY_HPP

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gpr/confined3d.hpp"
#include "gpr/errors.hpp"
#include "gpr/gpe1d.hpp"
#include "gpr/scattering.hpp"
#include "gpr/spectral.hpp"

namespace gpr {

/// Dense symmetric-or-not N-particle wavefunction.
///
/// Coefficients are taken in an orthonormal single-particle basis, so inner products are plain
/// Euclidean sums. For grid functions the coefficient is the sample times √(cell) per slot.
/// Slot 0 runs fastest: index = i₀ + d·i₁ + d²·i₂ + …
template <typename Real>
struct ManyBodyState {
  int N = 0;
  Eigen::Index sp_dim = 0;
  VectorC<Real> tensor;
  bool symmetric = false;

  Real norm() const { return tensor.norm(); }

  void validate() const {
    if (N < 1 || N > 4) throw DomainError("many-body state: N must lie in 1..4");
    if (sp_dim < 1) throw DomainError("many-body state: empty single-particle space");
    Eigen::Index size = 1;
    for (int s = 0; s < N; ++s) size *= sp_dim;
    if (tensor.size() != size) throw InterfaceError("many-body state: tensor size is not sp_dim^N");
  }
};

namespace detail {

inline Eigen::Index ipow(Eigen::Index base, int e) {
  Eigen::Index r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

template <typename Real>
void check_orbital(const ManyBodyState<Real>& psi, const VectorC<Real>& phi) {
  psi.validate();
  if (phi.size() != psi.sp_dim) throw InterfaceError("orbital size does not match the single-particle space");
  if (std::abs(phi.norm() - 1) > Real(1e-10)) throw DomainError("orbital must be normalised");
}

/// Neumaier compensated sum; long tensor reductions otherwise drift at the 1e-11 level.
template <typename Real>
struct CompensatedSum {
  Real sum = 0, carry = 0;
  void add(Real v) {
    const Real t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  Real value() const { return sum + carry; }
};

inline void check_slot(int j, int N) {
  if (j < 1 || j > N) throw DomainError("slot " + std::to_string(j) + " outside 1.." + std::to_string(N));
}

/// out(i₀,…,i_{N−1}) = in(i_{perm[0]},…,i_{perm[N−1]}).
template <typename Real>
VectorC<Real> permute_slots(const VectorC<Real>& in, int N, Eigen::Index d, const std::vector<int>& perm) {
  VectorC<Real> out(in.size());
  // Output digit t moves the source index by d^{perm⁻¹(t)}; walk the source index incrementally.
  std::vector<Eigen::Index> digit(static_cast<std::size_t>(N), 0), step(static_cast<std::size_t>(N));
  for (int s = 0; s < N; ++s) step[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)])] = ipow(d, s);
  Eigen::Index src = 0;
  for (Eigen::Index flat = 0; flat < in.size(); ++flat) {
    out[flat] = in[src];
    for (std::size_t t = 0; t < static_cast<std::size_t>(N); ++t) {
      src += step[t];
      if (++digit[t] < d) break;
      digit[t] = 0;
      src -= d * step[t];
    }
  }
  return out;
}

}  // namespace detail

/// Average over all slot permutations.
template <typename Real>
ManyBodyState<Real> symmetrise(const ManyBodyState<Real>& psi) {
  psi.validate();
  std::vector<int> perm(static_cast<std::size_t>(psi.N));
  std::iota(perm.begin(), perm.end(), 0);
  VectorC<Real> acc = VectorC<Real>::Zero(psi.tensor.size());
  int count = 0;
  do {
    acc += detail::permute_slots(psi.tensor, psi.N, psi.sp_dim, perm);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  ManyBodyState<Real> out = psi;
  out.tensor = acc / Real(count);
  out.symmetric = true;
  return out;
}

/// Largest ‖ψ − T_{j,j+1}ψ‖ over adjacent transpositions.
template <typename Real>
Real symmetry_defect(const ManyBodyState<Real>& psi) {
  psi.validate();
  Real worst = 0;
  for (int j = 0; j + 1 < psi.N; ++j) {
    std::vector<int> perm(static_cast<std::size_t>(psi.N));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(j + 1)]);
    worst = std::max(worst, (psi.tensor - detail::permute_slots(psi.tensor, psi.N, psi.sp_dim, perm)).norm());
  }
  return worst;
}

/// Check the declared invariants: unit norm and, if flagged, permutation symmetry.
template <typename Real>
void check_state(const ManyBodyState<Real>& psi, Real tol = Real(1e-12)) {
  psi.validate();
  if (std::abs(psi.norm() - 1) > tol) throw InvariantViolation("many-body state is not normalised");
  if (psi.symmetric && symmetry_defect(psi) > tol) throw InvariantViolation("many-body state is not symmetric");
}

/// Tensor product of single-particle vectors, slot 0 first.
template <typename Real>
ManyBodyState<Real> product_state(const std::vector<VectorC<Real>>& orbitals) {
  if (orbitals.empty()) throw DomainError("product_state: no orbitals");
  ManyBodyState<Real> psi;
  psi.N = static_cast<int>(orbitals.size());
  psi.sp_dim = orbitals.front().size();
  VectorC<Real> t = orbitals.front();
  for (std::size_t s = 1; s < orbitals.size(); ++s) {
    if (orbitals[s].size() != psi.sp_dim) throw InterfaceError("product_state: orbital sizes differ");
    VectorC<Real> next(t.size() * psi.sp_dim);
    for (Eigen::Index i = 0; i < psi.sp_dim; ++i) next.segment(i * t.size(), t.size()) = orbitals[s][i] * t;
    t = std::move(next);
  }
  psi.tensor = std::move(t);
  psi.validate();
  psi.symmetric = std::all_of(orbitals.begin(), orbitals.end(), [&](const auto& o) { return o == orbitals.front(); });
  return psi;
}

/// φ^{⊗N}.
template <typename Real>
ManyBodyState<Real> product_state(const VectorC<Real>& phi, int N) {
  return product_state(std::vector<VectorC<Real>>(static_cast<std::size_t>(N), phi));
}

/// Complex Gaussian tensor, symmetrised and normalised.
template <typename Real, typename Rng>
ManyBodyState<Real> random_symmetric_state(int N, Eigen::Index sp_dim, Rng& rng) {
  std::normal_distribution<Real> g;
  ManyBodyState<Real> psi;
  psi.N = N;
  psi.sp_dim = sp_dim;
  psi.tensor.resize(detail::ipow(sp_dim, N));
  psi.validate();
  for (Eigen::Index i = 0; i < psi.tensor.size(); ++i) psi.tensor[i] = {g(rng), g(rng)};
  psi = symmetrise(psi);
  psi.tensor /= psi.norm();
  return psi;
}

/// Random symmetric state spread between the condensate and the bulk of the Hilbert space.
///
/// A uniform draw s ∈ [0, 1) selects one of two families: cos(θ)φ^{⊗N} + sin(θ)G with G from
/// random_symmetric_state and θ = sπ/2, or a product of a randomly tilted orbital φ + s·g.
template <typename Real, typename Rng>
ManyBodyState<Real> random_near_condensate(const VectorC<Real>& phi, int N, Rng& rng) {
  std::uniform_real_distribution<Real> u;
  std::normal_distribution<Real> g;
  const Real s = u(rng);
  if (u(rng) < Real(0.5)) {
    const Real theta = s * std::numbers::pi_v<Real> / 2;
    ManyBodyState<Real> psi = random_symmetric_state<Real>(N, phi.size(), rng);
    psi.tensor = std::cos(theta) * product_state(phi, N).tensor + std::sin(theta) * psi.tensor;
    psi.tensor /= psi.norm();
    return psi;
  }
  VectorC<Real> tilt(phi.size());
  for (Eigen::Index i = 0; i < tilt.size(); ++i) tilt[i] = {g(rng), g(rng)};
  VectorC<Real> orb = phi + s * tilt / tilt.norm();
  orb /= orb.norm();
  return product_state(orb, N);
}

namespace detail {

/// p ← p_j v and, if requested, q ← v − p_j v, one block at a time.
template <typename Real>
void split_slot(const VectorC<Real>& v, Eigen::Index d, const VectorC<Real>& phi, int j, VectorC<Real>& p,
                VectorC<Real>* q) {
  const Eigen::Index inner = ipow(d, j - 1), block = inner * d, outer = v.size() / block;
  p.resize(v.size());
  if (q) q->resize(v.size());
  const VectorC<Real> conj_phi = phi.conjugate();
  VectorC<Real> c(inner);
  for (Eigen::Index o = 0; o < outer; ++o) {
    const Eigen::Map<const MatrixC<Real>> in(v.data() + o * block, inner, d);
    Eigen::Map<MatrixC<Real>> dst(p.data() + o * block, inner, d);
    c.noalias() = in * conj_phi;
    dst.noalias() = c * phi.transpose();
    if (q) Eigen::Map<MatrixC<Real>>(q->data() + o * block, inner, d) = in - dst;
  }
}

}  // namespace detail

/// p_j ψ: contraction of slot j (1-based) with φ.
template <typename Real>
ManyBodyState<Real> apply_p(const ManyBodyState<Real>& psi, const VectorC<Real>& phi, int j) {
  detail::check_orbital(psi, phi);
  detail::check_slot(j, psi.N);
  ManyBodyState<Real> out{psi.N, psi.sp_dim, {}, false};
  detail::split_slot(psi.tensor, psi.sp_dim, phi, j, out.tensor, static_cast<VectorC<Real>*>(nullptr));
  return out;
}

/// q_j ψ = ψ − p_j ψ.
template <typename Real>
ManyBodyState<Real> apply_q(const ManyBodyState<Real>& psi, const VectorC<Real>& phi, int j) {
  ManyBodyState<Real> out = apply_p(psi, phi, j);
  out.tensor = psi.tensor - out.tensor;
  return out;
}

/// P₀ψ, …, P_Nψ in one pass: slot by slot, P^{(j)}_k = p_j P^{(j−1)}_k + q_j P^{(j−1)}_{k−1}.
template <typename Real>
std::vector<ManyBodyState<Real>> projector_components(const ManyBodyState<Real>& psi, const VectorC<Real>& phi) {
  detail::check_orbital(psi, phi);
  std::vector<VectorC<Real>> comps{psi.tensor};
  VectorC<Real> p, q;
  for (int j = 1; j <= psi.N; ++j) {
    std::vector<VectorC<Real>> next(comps.size() + 1);
    for (std::size_t k = 0; k < comps.size(); ++k) {
      detail::split_slot(comps[k], psi.sp_dim, phi, j, p, &q);
      if (next[k].size())
        next[k] += p;
      else
        next[k] = std::move(p);
      next[k + 1] = std::move(q);
      p = VectorC<Real>();
      q = VectorC<Real>();
    }
    comps = std::move(next);
  }
  std::vector<ManyBodyState<Real>> out;
  out.reserve(comps.size());
  for (auto& c : comps) out.push_back({psi.N, psi.sp_dim, std::move(c), psi.symmetric});
  return out;
}

/// P_k ψ; zero for k outside 0..N.
template <typename Real>
ManyBodyState<Real> apply_P(const ManyBodyState<Real>& psi, const VectorC<Real>& phi, int k) {
  detail::check_orbital(psi, phi);
  if (k < 0 || k > psi.N) {
    ManyBodyState<Real> z = psi;
    z.tensor.setZero();
    return z;
  }
  return projector_components(psi, phi)[static_cast<std::size_t>(k)];
}

/// Weight function of the counting functional and its discrete differences.
template <typename Real>
class WeightTable {
 public:
  WeightTable(int N, Real xi) : N_(N), xi_(xi) {
    if (N < 1) throw DomainError("WeightTable: N must be positive");
    if (!(xi > 0 && xi < Real(0.5))) throw DomainError("WeightTable: xi must lie in (0, 1/2)");
    threshold_ = std::pow(Real(N), 1 - 2 * xi);
  }

  int N() const { return N_; }
  Real xi() const { return xi_; }

  /// m(k) for any k ≥ 0; beyond N the defining formula is simply continued.
  Real m(long k) const {
    if (k < 0) throw DomainError("WeightTable: negative index");
    const Real kk = static_cast<Real>(k), n = static_cast<Real>(N_);
    if (kk >= threshold_) return std::sqrt(kk / n);
    return (std::pow(n, -1 + xi_) * kk + std::pow(n, -xi_)) / 2;
  }
  Real a(long k) const { return m(k) - m(k + 1); }
  Real b(long k) const { return m(k) - m(k + 2); }
  Real c(long k) const { return a(k) - a(k + 1); }
  Real d(long k) const { return a(k) - a(k + 2); }
  Real e(long k) const { return b(k) - b(k + 1); }
  Real f(long k) const { return b(k) - b(k + 2); }

  /// Named difference as a function of k, for use with apply_weighted.
  std::function<Real(long)> weight(char which) const {
    switch (which) {
      case 'm': return [this](long k) { return m(k); };
      case 'a': return [this](long k) { return a(k); };
      case 'b': return [this](long k) { return b(k); };
      case 'c': return [this](long k) { return c(k); };
      case 'd': return [this](long k) { return d(k); };
      case 'e': return [this](long k) { return e(k); };
      case 'f': return [this](long k) { return f(k); };
    }
    throw DomainError(std::string("WeightTable: unknown weight '") + which + "'");
  }

  /// Tabulated values on 0..N.
  VectorR<Real> table(char which) const {
    const auto w = weight(which);
    VectorR<Real> v(N_ + 1);
    for (int k = 0; k <= N_; ++k) v[k] = w(k);
    return v;
  }

 private:
  int N_;
  Real xi_;
  Real threshold_;
};

/// Suprema of the first and second differences against N^{−1+ξ} and N^{−2+3ξ}.
template <typename Real>
struct WeightBounds {
  Real sup_first = 0;   ///< max over a, b
  Real sup_second = 0;  ///< max over c..f
  Real limit_first = 0;
  Real limit_second = 0;
  bool monotone = false;
  // Linear-branch differences equal N^{−1+ξ} exactly; a difference of two weights of size ≤ 1
  // carries absolute rounding of a few ulps.
  bool holds(Real C = 1) const {
    const Real slack = 16 * std::numeric_limits<Real>::epsilon();
    return monotone && sup_first <= limit_first + slack && sup_second <= C * limit_second + slack;
  }
};

template <typename Real>
WeightBounds<Real> weight_bounds(const WeightTable<Real>& w) {
  WeightBounds<Real> out;
  const Real n = static_cast<Real>(w.N());
  out.limit_first = std::pow(n, -1 + w.xi());
  out.limit_second = std::pow(n, -2 + 3 * w.xi());
  out.monotone = true;
  for (long k = 0; k <= w.N(); ++k) {
    if (k < w.N() && w.m(k + 1) < w.m(k)) out.monotone = false;
    out.sup_first = std::max({out.sup_first, std::abs(w.a(k)), std::abs(w.b(k))});
    out.sup_second = std::max({out.sup_second, std::abs(w.c(k)), std::abs(w.d(k)), std::abs(w.e(k)), std::abs(w.f(k))});
  }
  return out;
}

/// f̂_d ψ = Σ_{j=−d}^{N−d} f(j+d) P_j ψ with P_j = 0 outside 0..N; d = 0 gives f̂.
template <typename Real, typename F>
ManyBodyState<Real> apply_weighted(const ManyBodyState<Real>& psi, const VectorC<Real>& phi, F&& f, int d = 0) {
  if (std::abs(d) > psi.N) throw DomainError("apply_weighted: shift " + std::to_string(d) + " beyond the window");
  const auto comps = projector_components(psi, phi);
  ManyBodyState<Real> out = psi;
  out.tensor.setZero();
  for (int j = std::max(0, -d); j <= std::min(psi.N, psi.N - d); ++j)
    out.tensor += f(j + d) * comps[static_cast<std::size_t>(j)].tensor;
  return out;
}

/// ⟨ψ, m̂ψ⟩ = Σ_k m(k)‖P_kψ‖².
template <typename Real>
Real counting_term(const ManyBodyState<Real>& psi, const VectorC<Real>& phi, const WeightTable<Real>& w) {
  if (w.N() != psi.N) throw InterfaceError("counting_term: weight table built for a different N");
  const auto comps = projector_components(psi, phi);
  Real s = 0;
  for (int k = 0; k <= psi.N; ++k) s += w.m(k) * comps[static_cast<std::size_t>(k)].tensor.squaredNorm();
  return s;
}

/// r̂ψ = m̂^b p₁p₂ψ + m̂^a(p₁q₂ + q₁p₂)ψ.
template <typename Real>
ManyBodyState<Real> apply_r(const ManyBodyState<Real>& psi, const VectorC<Real>& phi, const WeightTable<Real>& w) {
  if (psi.N < 2) throw DomainError("apply_r: needs at least two particles");
  const auto p2 = apply_p(psi, phi, 2), q2 = apply_q(psi, phi, 2);
  const auto pp = apply_p(p2, phi, 1);
  auto mixed = apply_p(q2, phi, 1);
  mixed.tensor += apply_q(p2, phi, 1).tensor;
  ManyBodyState<Real> out = apply_weighted(pp, phi, w.weight('b'));
  out.tensor += apply_weighted(mixed, phi, w.weight('a')).tensor;
  return out;
}

/// k-particle reduced density matrix in the orthonormal basis: γ = M M† with M of shape d^k × d^{N−k}.
template <typename Real>
MatrixC<Real> rdm(const ManyBodyState<Real>& psi, int k) {
  psi.validate();
  if (k < 1 || k >= psi.N) throw DomainError("rdm: k must lie in 1..N-1");
  const Eigen::Index rows = detail::ipow(psi.sp_dim, k), cols = psi.tensor.size() / rows;
  const Eigen::Map<const MatrixC<Real>> M(psi.tensor.data(), rows, cols);
  MatrixC<Real> g = M * M.adjoint();
  return (g + g.adjoint()).eval() / Real(2);
}

/// Trace out the last single-particle factor of a density matrix on (ℂ^d)^{⊗k}.
template <typename Real>
MatrixC<Real> partial_trace_last(const MatrixC<Real>& gamma, Eigen::Index d) {
  const Eigen::Index n = gamma.rows();
  if (gamma.cols() != n || d < 1 || n % d != 0) throw InterfaceError("partial_trace_last: shape mismatch");
  const Eigen::Index m = n / d;
  MatrixC<Real> out = MatrixC<Real>::Zero(m, m);
  for (Eigen::Index b = 0; b < d; ++b) out += gamma.block(b * m, b * m, m, m);
  return out;
}

/// Σ|λ| of a Hermitian matrix.
template <typename Real>
Real trace_norm(const MatrixC<Real>& A) {
  Eigen::SelfAdjointEigenSolver<MatrixC<Real>> eig(A, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("trace_norm: eigendecomposition failed");
  return eig.eigenvalues().cwiseAbs().sum();
}

/// Tr|γ^{(1)} − |φ⟩⟨φ||.
template <typename Real>
Real trace_distance(const ManyBodyState<Real>& psi, const VectorC<Real>& phi) {
  detail::check_orbital(psi, phi);
  const MatrixC<Real> g = rdm(psi, 1) - phi * phi.adjoint();
  return trace_norm(g);
}

/// Single-particle product grid z = (x, y₁, y₂), flat index s = ix + n_x(i₁ + n_y i₂).
template <typename Real>
struct ProductGrid3D {
  PeriodicAxis<Real> x;
  PeriodicAxis<Real> y;

  Eigen::Index size() const { return x.n * y.n * y.n; }
  Real cell() const { return x.spacing() * y.spacing() * y.spacing(); }
  void validate() const {
    x.validate();
    y.validate();
  }
  void coords(Eigen::Index s, Real& cx, Real& c1, Real& c2) const {
    const Eigen::Index ix = s % x.n, r = s / x.n;
    cx = x.coord(ix);
    c1 = y.coord(r % y.n);
    c2 = y.coord(r / y.n);
  }
  /// Minimum-image distance on the periodic box.
  Real distance(Eigen::Index s, Eigen::Index t) const {
    Real a[3], b[3];
    coords(s, a[0], a[1], a[2]);
    coords(t, b[0], b[1], b[2]);
    const Real L[3] = {x.length, y.length, y.length};
    Real r2 = 0;
    for (int q = 0; q < 3; ++q) {
      Real dq = std::fmod(std::abs(a[q] - b[q]), L[q]);
      dq = std::min(dq, L[q] - dq);
      r2 += dq * dq;
    }
    return std::sqrt(r2);
  }
};

/// Separable 3D FFT on ProductGrid3D vectors.
template <typename Real>
class Spectral3D {
 public:
  using Complex = std::complex<Real>;

  explicit Spectral3D(const ProductGrid3D<Real>& g) : g_(g), kx_(g.x.wavenumbers()), ky_(g.y.wavenumbers()) {
    g_.validate();
    line_.resize(std::max(g.x.n, g.y.n));
    out_.resize(line_.size());
  }

  const ProductGrid3D<Real>& grid() const { return g_; }

  void forward(VectorC<Real>& v) { transform(v, true); }
  void inverse(VectorC<Real>& v) { transform(v, false); }

  /// Angular wavevector component q ∈ {0, 1, 2} at flat Fourier index s.
  Real wavenumber(Eigen::Index s, int q) const {
    const Eigen::Index ix = s % g_.x.n, r = s / g_.x.n;
    return q == 0 ? kx_[ix] : q == 1 ? ky_[r % g_.y.n] : ky_[r / g_.y.n];
  }
  Real k_squared(Eigen::Index s) const {
    const Real a = wavenumber(s, 0), b = wavenumber(s, 1), c = wavenumber(s, 2);
    return a * a + b * b + c * c;
  }

  /// ∂_q v by spectral differentiation along one axis only, Nyquist mode zeroed.
  VectorC<Real> derivative(const VectorC<Real>& v, int q) {
    const Eigen::Index nx = g_.x.n, ny = g_.y.n;
    if (v.size() != g_.size()) throw InterfaceError("3D derivative: size mismatch");
    VectorC<Real> out = v;
    const VectorR<Real>& k = q == 0 ? kx_ : ky_;
    const Eigen::Index n = q == 0 ? nx : ny;
    auto diff = [&](Eigen::Index start, Eigen::Index stride) {
      for (Eigen::Index t = 0; t < n; ++t) line_[t] = out[start + t * stride];
      fft_.fwd(out_.data(), line_.data(), n);
      for (Eigen::Index t = 0; t < n; ++t) out_[t] *= (n % 2 == 0 && t == n / 2) ? Complex(0) : Complex(0, k[t]);
      fft_.inv(line_.data(), out_.data(), n);
      for (Eigen::Index t = 0; t < n; ++t) out[start + t * stride] = line_[t];
    };
    if (q == 0)
      for (Eigen::Index r = 0; r < ny * ny; ++r) diff(r * nx, 1);
    else if (q == 1)
      for (Eigen::Index i2 = 0; i2 < ny; ++i2)
        for (Eigen::Index ix = 0; ix < nx; ++ix) diff(ix + nx * ny * i2, nx);
    else
      for (Eigen::Index i1 = 0; i1 < ny; ++i1)
        for (Eigen::Index ix = 0; ix < nx; ++ix) diff(ix + nx * i1, nx * ny);
    return out;
  }

 private:
  void transform(VectorC<Real>& v, bool fwd) {
    const Eigen::Index nx = g_.x.n, ny = g_.y.n;
    if (v.size() != g_.size()) throw InterfaceError("3D transform: size mismatch");
    auto run = [&](Eigen::Index n, Eigen::Index start, Eigen::Index stride) {
      for (Eigen::Index t = 0; t < n; ++t) line_[t] = v[start + t * stride];
      if (fwd)
        fft_.fwd(out_.data(), line_.data(), n);
      else
        fft_.inv(out_.data(), line_.data(), n);
      for (Eigen::Index t = 0; t < n; ++t) v[start + t * stride] = out_[t];
    };
    for (Eigen::Index r = 0; r < ny * ny; ++r) run(nx, r * nx, 1);
    for (Eigen::Index i2 = 0; i2 < ny; ++i2)
      for (Eigen::Index ix = 0; ix < nx; ++ix) run(ny, ix + nx * ny * i2, nx);
    for (Eigen::Index i1 = 0; i1 < ny; ++i1)
      for (Eigen::Index ix = 0; ix < nx; ++ix) run(ny, ix + nx * i1, nx * ny);
  }

  ProductGrid3D<Real> g_;
  VectorR<Real> kx_, ky_;
  Eigen::FFT<Real> fft_;
  std::vector<Complex> line_, out_;
};

/// N-particle Hamiltonian
///   Σ_j (−Δ_j + ε⁻²V⊥(y_j/ε) + V∥(t, z_j)) + Σ_{i<j} w_μ(z_i − z_j)
/// on a periodic product grid; y is the physical (ε-scaled) transverse axis.
template <typename Real>
struct ManyBodyHamiltonian {
  ProductGrid3D<Real> grid;
  Real epsilon = 1;
  Real mu = 1;
  Real time = 0;
  std::function<Real(Real, Real)> V_perp;  ///< unscaled V⊥(y₁, y₂)
  SpacePotential<Real> V_par;               ///< may be empty
  RadialPotential<Real> w = RadialPotential<Real>::zero();
  Real b = 0;  ///< effective coupling in the one-dimensional energy
};

template <typename Real>
struct ManyBodyEnergy {
  Real kinetic = 0;
  Real confinement = 0;  ///< Σ_j ⟨ε⁻²V⊥(y_j/ε)⟩
  Real longitudinal = 0; ///< Σ_j ⟨V∥(t, z_j)⟩
  Real pair = 0;
  Real transverse_ground = 0;  ///< E₀/ε² of the discrete transverse operator
  int N = 0;

  Real total() const { return kinetic + confinement + longitudinal + pair; }
  /// N⁻¹⟨H⟩ − E₀/ε².
  Real renormalised() const { return total() / N - transverse_ground; }
};

/// Precomputed pieces of a ManyBodyHamiltonian: kinetic symbol, one-body potential, pair table and the
/// discrete transverse ground state.
template <typename Real>
class ManyBodyOperator {
 public:
  explicit ManyBodyOperator(ManyBodyHamiltonian<Real> h) : h_(std::move(h)), fft_(h_.grid) {
    const auto& g = h_.grid;
    if (!(h_.epsilon > 0)) throw DomainError("many-body Hamiltonian: epsilon must be positive");
    if (!h_.V_perp) throw DomainError("many-body Hamiltonian: V_perp is required");
    const Eigen::Index d = g.size();
    const Real eps = h_.epsilon;

    const PeriodicAxis<Real> unscaled{g.y.n, g.y.length / eps};
    const auto basis =
        transverse_basis(sample_2d(unscaled, h_.V_perp), unscaled, std::numeric_limits<Real>::infinity());
    E0_eps_ = basis.eigenvalues[0] / (eps * eps);
    chi_ = basis.Q.col(0);
    Eigen::Index imax;
    chi_.cwiseAbs().maxCoeff(&imax);
    if (chi_[imax] < 0) chi_ = -chi_;

    k2_.resize(d);
    conf_.resize(d);
    par_.resize(d);
    for (Eigen::Index s = 0; s < d; ++s) {
      Real x, y1, y2;
      g.coords(s, x, y1, y2);
      k2_[s] = fft_.k_squared(s);
      conf_[s] = h_.V_perp(y1 / eps, y2 / eps) / (eps * eps);
      par_[s] = h_.V_par ? h_.V_par(h_.time, x, y1, y2) : Real(0);
    }

    if (!h_.w.is_zero()) {
      const Real support = h_.w.range() * h_.mu;
      const Real h = std::max(g.x.spacing(), g.y.spacing());
      if (h > support / 2)
        throw ResolutionError("many-body Hamiltonian: spacing " + num(h) + " leaves fewer than 4 points across the " +
                              "interaction support of diameter " + num(2 * support));
      W_.resize(d, d);
      for (Eigen::Index t = 0; t < d; ++t)
        for (Eigen::Index s = 0; s < d; ++s) W_(s, t) = h_.w.scaled(g.distance(s, t), h_.mu);
    }
  }

  const ManyBodyHamiltonian<Real>& spec() const { return h_; }
  /// Discrete χ^ε in orthonormal coefficients on the ny² transverse grid.
  const VectorR<Real>& chi() const { return chi_; }
  Real E0_over_eps2() const { return E0_eps_; }

  /// φ = Φ ⊗ χ^ε as orthonormal coefficients on the product grid. Φ must live on grid.x.
  VectorC<Real> orbital(const Field1D<Real>& Phi) const {
    if (!same_axis(Phi.axis, h_.grid.x)) throw InterfaceError("orbital: profile axis differs from the grid");
    const VectorC<Real> c = Phi.values * std::sqrt(Phi.axis.spacing());
    VectorC<Real> phi(h_.grid.size());
    const Eigen::Index nx = h_.grid.x.n;
    for (Eigen::Index r = 0; r < chi_.size(); ++r) phi.segment(r * nx, nx) = c * chi_[r];
    return phi;
  }

  ManyBodyEnergy<Real> energy(const ManyBodyState<Real>& psi) {
    psi.validate();
    const Eigen::Index d = h_.grid.size();
    if (psi.sp_dim != d) throw InterfaceError("energy: state does not live on the Hamiltonian grid");
    ManyBodyEnergy<Real> e;
    e.N = psi.N;
    e.transverse_ground = E0_eps_;

    // Kinetic: per slot, gather the d-vector at fixed other indices and sum k²|v̂|²/d.
    detail::CompensatedSum<Real> kin, conf, par, pair;
    VectorC<Real> line(d);
    for (int j = 0; j < psi.N; ++j) {
      const Eigen::Index inner = detail::ipow(d, j), block = inner * d, outer = psi.tensor.size() / block;
      for (Eigen::Index o = 0; o < outer; ++o)
        for (Eigen::Index a = 0; a < inner; ++a) {
          for (Eigen::Index s = 0; s < d; ++s) line[s] = psi.tensor[a + inner * s + block * o];
          fft_.forward(line);
          kin.add(k2_.dot(line.cwiseAbs2()));
        }
    }
    e.kinetic = kin.value() / static_cast<Real>(d);

    std::vector<Eigen::Index> digit(static_cast<std::size_t>(psi.N), 0);
    for (Eigen::Index flat = 0; flat < psi.tensor.size(); ++flat) {
      const Real rho = std::norm(psi.tensor[flat]);
      Real c = 0, v = 0, w = 0;
      for (int j = 0; j < psi.N; ++j) {
        const Eigen::Index s = digit[static_cast<std::size_t>(j)];
        c += conf_[s];
        v += par_[s];
        if (W_.size())
          for (int i = 0; i < j; ++i) w += W_(digit[static_cast<std::size_t>(i)], s);
      }
      conf.add(c * rho);
      par.add(v * rho);
      pair.add(w * rho);
      for (int j = 0; j < psi.N; ++j) {
        if (++digit[static_cast<std::size_t>(j)] < d) break;
        digit[static_cast<std::size_t>(j)] = 0;
      }
    }
    e.confinement = conf.value();
    e.longitudinal = par.value();
    e.pair = pair.value();
    return e;
  }

  /// E^Φ = ⟨Φ, (−∂² + V∥(t, (x, 0)) + b/2|Φ|²)Φ⟩.
  Real effective_energy(const Field1D<Real>& Phi) const {
    Field1D<Real> at = Phi;
    at.time = h_.time;
    LinePotential<Real> V;
    if (h_.V_par) V = [Vp = h_.V_par](Real t, Real x) { return Vp(t, x, 0, 0); };
    return energy_1d(at, V, h_.b).total();
  }

 private:
  ManyBodyHamiltonian<Real> h_;
  Spectral3D<Real> fft_;
  Real E0_eps_ = 0;
  VectorR<Real> chi_;
  VectorR<Real> k2_, conf_, par_;
  MatrixR<Real> W_;
};

/// E^ψ = N⁻¹⟨ψ, Hψ⟩ − E₀/ε².
template <typename Real>
Real energy_N(const ManyBodyState<Real>& psi, const ManyBodyHamiltonian<Real>& h) {
  ManyBodyOperator<Real> op(h);
  return op.energy(psi).renormalised();
}

template <typename Real>
struct AlphaParts {
  Real counting = 0;
  Real energy_gap = 0;
  Real total() const { return counting + energy_gap; }
};

/// ⟨ψ, m̂ψ⟩ + |E^ψ − E^Φ| with φ = Φ ⊗ χ^ε.
template <typename Real>
AlphaParts<Real> alpha_functional(const ManyBodyState<Real>& psi, const Field1D<Real>& Phi, ManyBodyOperator<Real>& op,
                                  const WeightTable<Real>& w) {
  const VectorC<Real> phi = op.orbital(Phi);
  if (std::abs(phi.norm() - 1) > Real(1e-10)) throw DomainError("alpha_functional: Phi is not normalised");
  AlphaParts<Real> out;
  out.counting = counting_term(psi, phi, w);
  out.energy_gap = std::abs(op.energy(psi).renormalised() - op.effective_energy(Phi));
  return out;
}

/// Both sides of the two inequalities relating α and the trace distance of γ^{(1)}.
template <typename Real>
struct CondensationBounds {
  Real alpha = 0;
  Real energy_gap = 0;
  Real trace_distance = 0;
  Real upper_trace = 0;  ///< √(8α)
  Real upper_alpha = 0;  ///< |ΔE| + √Tr + ½N^{−ξ}
  bool trace_bound() const { return trace_distance <= upper_trace; }
  bool alpha_bound() const { return alpha <= upper_alpha; }
};

template <typename Real>
CondensationBounds<Real> condensation_bounds(const ManyBodyState<Real>& psi, const VectorC<Real>& phi,
                                             const WeightTable<Real>& w, Real energy_gap) {
  CondensationBounds<Real> c;
  c.energy_gap = energy_gap;
  c.alpha = counting_term(psi, phi, w) + energy_gap;
  c.trace_distance = trace_distance(psi, phi);
  c.upper_trace = std::sqrt(8 * c.alpha);
  c.upper_alpha = energy_gap + std::sqrt(c.trace_distance) + std::pow(Real(w.N()), -w.xi()) / 2;
  return c;
}

/// ‖1_{|z₁−z₂|<R}∇₁ψ‖² and ½⟨ψ, (w_μ − U)(z₁ − z₂)ψ⟩ for a two-particle grid state.
template <typename Real>
struct ScatteringForm {
  Real gradient = 0;
  Real potential = 0;
  Real total() const { return gradient + potential; }
};

/// Evaluates the form for many states on one grid; the pair tables are built once.
template <typename Real>
class ScatteringFormEvaluator {
 public:
  ScatteringFormEvaluator(const ProductGrid3D<Real>& grid, const CorrectionProfile<Real>& c,
                          const RadialPotential<Real>& w)
      : grid_(grid), fft_(grid) {
    const Real half = std::min(grid.x.length, grid.y.length) / 2;
    if (c.R >= half)
      throw ResolutionError("scattering_form: R = " + num(c.R) + " does not fit in the half box " + num(half));
    const Real h = std::max(grid.x.spacing(), grid.y.spacing());
    if (h > w.range() * c.mu / 2)
      throw ResolutionError("scattering_form: fewer than 4 points across the interaction support");
    const Eigen::Index d = grid.size();
    inside_.resize(d, d);
    half_potential_.resize(d, d);
    for (Eigen::Index t = 0; t < d; ++t)
      for (Eigen::Index s = 0; s < d; ++s) {
        const Real r = grid.distance(s, t);
        inside_(s, t) = r < c.R ? Real(1) : Real(0);
        half_potential_(s, t) = (w.scaled(r, c.mu) - c.U(r)) / 2;
      }
  }

  ScatteringForm<Real> operator()(const ManyBodyState<Real>& psi) {
    psi.validate();
    const Eigen::Index d = grid_.size();
    if (psi.N != 2) throw DomainError("scattering_form: needs a two-particle state");
    if (psi.sp_dim != d) throw InterfaceError("scattering_form: state does not live on the grid");
    ScatteringForm<Real> out;
    for (Eigen::Index t = 0; t < d; ++t) {
      const VectorC<Real> col = psi.tensor.segment(t * d, d);
      VectorR<Real> grad2 = VectorR<Real>::Zero(d);
      for (int q = 0; q < 3; ++q) grad2 += fft_.derivative(col, q).cwiseAbs2();
      out.gradient += inside_.col(t).dot(grad2);
      out.potential += half_potential_.col(t).dot(col.cwiseAbs2());
    }
    return out;
  }

 private:
  ProductGrid3D<Real> grid_;
  Spectral3D<Real> fft_;
  MatrixR<Real> inside_;
  MatrixR<Real> half_potential_;
};

/// Random smooth two-particle state with a random short-range dip,
///   ψ(z₁, z₂) = u(z₁)u(z₂)·(1 − λ·s(|z₁ − z₂|/ρ)),  s(x) = (1 − x²)²₊,
/// where u = 1 + A·(random superposition of the lowest Fourier modes) with A ∈ [0, 0.1), λ ∈ [0, 1)
/// and ρ ∈ [μ, R]. A weak envelope keeps the short-range dip the dominant feature.
template <typename Real, typename Rng>
ManyBodyState<Real> random_pair_state(const ProductGrid3D<Real>& grid, const CorrectionProfile<Real>& c, Rng& rng) {
  std::uniform_real_distribution<Real> u;
  std::normal_distribution<Real> g;
  const Eigen::Index d = grid.size();
  VectorC<Real> env(d);
  const Real dkx = 2 * std::numbers::pi_v<Real> / grid.x.length, dky = 2 * std::numbers::pi_v<Real> / grid.y.length;
  std::complex<Real> coef[3][3][3];
  const Real amp = Real(0.1) * u(rng);
  for (auto& a : coef)
    for (auto& b : a)
      for (auto& e : b) e = amp * std::complex<Real>(g(rng), g(rng));
  for (Eigen::Index s = 0; s < d; ++s) {
    Real x, y1, y2;
    grid.coords(s, x, y1, y2);
    std::complex<Real> v(1, 0);
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        for (int e = -1; e <= 1; ++e)
          v += coef[a + 1][b + 1][e + 1] * std::polar(Real(1), a * dkx * x + b * dky * y1 + e * dky * y2);
    env[s] = v;
  }
  const Real lambda = u(rng), rho = c.mu + u(rng) * (c.R - c.mu);
  ManyBodyState<Real> psi;
  psi.N = 2;
  psi.sp_dim = d;
  psi.tensor.resize(d * d);
  for (Eigen::Index t = 0; t < d; ++t)
    for (Eigen::Index s = 0; s < d; ++s) {
      const Real x = grid.distance(s, t) / rho;
      const Real bump = x < 1 ? (1 - x * x) * (1 - x * x) : Real(0);
      psi.tensor[s + d * t] = env[s] * env[t] * (1 - lambda * bump);
    }
  psi.tensor /= psi.norm();
  psi.symmetric = true;
  return psi;
}

template <typename Real>
ScatteringForm<Real> scattering_form(const ManyBodyState<Real>& psi, const ProductGrid3D<Real>& grid,
                                     const CorrectionProfile<Real>& c, const RadialPotential<Real>& w) {
  ScatteringFormEvaluator<Real> ev(grid, c, w);
  return ev(psi);
}

}  // namespace gpr

#endif  // GPR_MANYBODY_HPP
