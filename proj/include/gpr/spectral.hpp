#ifndef GPR_SPECTRAL_HPP
#define GPR_SPECTRAL_HPP

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "gpr/errors.hpp"

namespace gpr {

template <typename Real>
using VectorC = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;
template <typename Real>
using VectorR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <typename Real>
using MatrixC = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

/// Uniform periodic axis on [-length/2, length/2).
template <typename Real>
struct PeriodicAxis {
  Eigen::Index n = 0;
  Real length = 0;

  Real spacing() const { return length / static_cast<Real>(n); }
  Real coord(Eigen::Index j) const { return -length / 2 + static_cast<Real>(j) * spacing(); }

  VectorR<Real> coords() const {
    VectorR<Real> x(n);
    for (Eigen::Index j = 0; j < n; ++j) x[j] = coord(j);
    return x;
  }

  /// Angular wavenumbers in FFT order. The Nyquist mode carries -π/h.
  VectorR<Real> wavenumbers() const {
    VectorR<Real> k(n);
    const Real dk = 2 * std::numbers::pi_v<Real> / length;
    for (Eigen::Index j = 0; j < n; ++j) k[j] = dk * static_cast<Real>(j < (n + 1) / 2 ? j : j - n);
    return k;
  }

  bool operator==(const PeriodicAxis&) const = default;

  void validate() const {
    if (n < 2 || !(length > 0)) throw DomainError("periodic axis needs n >= 2 and positive length");
  }
};

/// Axis mismatch beyond round-off.
template <typename Real>
bool same_axis(const PeriodicAxis<Real>& a, const PeriodicAxis<Real>& b) {
  return a.n == b.n && std::abs(a.length - b.length) <= Real(1e-12) * std::max(a.length, b.length);
}

/// One-dimensional periodic spectral operator: forward/inverse FFT and Fourier multipliers.
template <typename Real>
class Spectral1D {
 public:
  using Complex = std::complex<Real>;

  explicit Spectral1D(PeriodicAxis<Real> axis) : axis_(axis), k_(axis.wavenumbers()), k2_(k_.cwiseAbs2()) {
    axis_.validate();
    scratch_.resize(axis_.n);
  }

  const PeriodicAxis<Real>& axis() const { return axis_; }
  const VectorR<Real>& wavenumbers() const { return k_; }
  const VectorR<Real>& k_squared() const { return k2_; }

  void forward(const Complex* src, Complex* dst) { fft_.fwd(dst, src, axis_.n); }
  void inverse(const Complex* src, Complex* dst) { fft_.inv(dst, src, axis_.n); }

  VectorC<Real> forward(const VectorC<Real>& v) {
    VectorC<Real> out(axis_.n);
    forward(v.data(), out.data());
    return out;
  }
  VectorC<Real> inverse(const VectorC<Real>& v) {
    VectorC<Real> out(axis_.n);
    inverse(v.data(), out.data());
    return out;
  }

  /// v ← F⁻¹ diag(m) F v, in place on a contiguous run of n values.
  void apply_multiplier(Complex* v, const VectorC<Real>& m) {
    fft_.fwd(scratch_.data(), v, axis_.n);
    for (Eigen::Index j = 0; j < axis_.n; ++j) scratch_[j] *= m[j];
    fft_.inv(v, scratch_.data(), axis_.n);
  }

  /// −∂² v by spectral differentiation.
  VectorC<Real> minus_laplacian(const VectorC<Real>& v) {
    VectorC<Real> hat = forward(v);
    hat.array() *= k2_.template cast<Complex>().array();
    return inverse(hat);
  }

  /// ∂ v by spectral differentiation (Nyquist mode zeroed).
  VectorC<Real> derivative(const VectorC<Real>& v) {
    VectorC<Real> hat = forward(v);
    for (Eigen::Index j = 0; j < axis_.n; ++j) hat[j] *= Complex(0, k_[j]);
    if (axis_.n % 2 == 0) hat[axis_.n / 2] = Complex(0);
    return inverse(hat);
  }

 private:
  PeriodicAxis<Real> axis_;
  VectorR<Real> k_;
  VectorR<Real> k2_;
  Eigen::FFT<Real> fft_;
  VectorC<Real> scratch_;
};

/// Square periodic grid in two dimensions. Flat index p = i + n·j with y₁ = coord(i), y₂ = coord(j).
template <typename Real>
class Spectral2D {
 public:
  using Complex = std::complex<Real>;

  explicit Spectral2D(PeriodicAxis<Real> axis) : line_(axis), k2_(axis.n * axis.n) {
    const auto& k = line_.k_squared();
    for (Eigen::Index j = 0; j < axis.n; ++j)
      for (Eigen::Index i = 0; i < axis.n; ++i) k2_[i + axis.n * j] = k[i] + k[j];
    column_.resize(axis.n);
    row_.resize(axis.n);
  }

  const PeriodicAxis<Real>& axis() const { return line_.axis(); }
  Eigen::Index size() const { return axis().n * axis().n; }
  /// |k|² in the flat layout.
  const VectorR<Real>& k_squared() const { return k2_; }

  VectorC<Real> forward(const VectorC<Real>& v) { return transform(v, true); }
  VectorC<Real> inverse(const VectorC<Real>& v) { return transform(v, false); }

  /// −Δ v.
  VectorC<Real> minus_laplacian(const VectorC<Real>& v) {
    VectorC<Real> hat = forward(v);
    hat.array() *= k2_.template cast<Complex>().array();
    return inverse(hat);
  }

  /// Apply a Fourier-space multiplier given in the flat layout.
  VectorC<Real> apply_multiplier(const VectorC<Real>& v, const VectorR<Real>& m) {
    VectorC<Real> hat = forward(v);
    hat.array() *= m.template cast<Complex>().array();
    return inverse(hat);
  }

 private:
  VectorC<Real> transform(const VectorC<Real>& v, bool fwd) {
    const Eigen::Index n = axis().n;
    if (v.size() != n * n) throw InterfaceError("2D transform: size mismatch");
    VectorC<Real> out(n * n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (fwd)
        line_.forward(v.data() + n * j, out.data() + n * j);
      else
        line_.inverse(v.data() + n * j, out.data() + n * j);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) row_[j] = out[i + n * j];
      if (fwd)
        line_.forward(row_.data(), column_.data());
      else
        line_.inverse(row_.data(), column_.data());
      for (Eigen::Index j = 0; j < n; ++j) out[i + n * j] = column_[j];
    }
    return out;
  }

  Spectral1D<Real> line_;
  VectorR<Real> k2_;
  VectorC<Real> column_;
  VectorC<Real> row_;
};

/// Trapezoid-rule L² norm on a uniform grid with cell measure `cell`.
template <typename Derived>
auto grid_norm(const Eigen::MatrixBase<Derived>& v, typename Eigen::NumTraits<typename Derived::Scalar>::Real cell) {
  return std::sqrt(v.squaredNorm() * cell);
}

/// ⟨u, v⟩ on a uniform grid (conjugate-linear in u).
template <typename DerivedA, typename DerivedB>
auto grid_inner(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v,
                typename Eigen::NumTraits<typename DerivedA::Scalar>::Real cell) {
  return u.dot(v) * cell;
}

}  // namespace gpr

#endif  // GPR_SPECTRAL_HPP
