#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "gpr/gpe1d.hpp"

using namespace gpr;
using cd = std::complex<double>;
constexpr double pi = std::numbers::pi;

namespace {

// Free evolution of a Gaussian under i∂_tΦ = −∂²Φ: s² → s² + 2it in the Fourier symbol.
cd free_gaussian(double x, double s, double t) {
  const cd w = cd(s * s, 2 * t);
  return std::pow(pi * s * s, -0.25) * std::sqrt(cd(s * s) / w) * std::exp(-x * x / (2.0 * w));
}

Field1D<double> moving_gaussian(const PeriodicAxis<double>& ax, double x0, double k0) {
  return make_field_1d(ax, [=](double x) {
    return std::pow(pi, -0.25) * std::exp(-(x - x0) * (x - x0) / 2) * std::polar(1.0, k0 * x);
  });
}

LinePotential<double> trap() {
  return [](double, double x) { return 0.5 * x * x + 0.2 * std::cos(x); };
}

double l2_distance(const Field1D<double>& a, const Field1D<double>& b) {
  return grid_norm(VectorC<double>(a.values - b.values), a.axis.spacing());
}

}  // namespace

TEST_CASE("free gaussian follows the analytic dispersion") {
  const PeriodicAxis<double> ax{512, 60.0};
  const double s = 1.3;
  auto phi = make_field_1d(ax, [s](double x) { return free_gaussian(x, s, 0); });
  Schedule1D<double> sch;
  sch.T = 1.0;
  sch.dt = 1e-2;
  const auto tr = evolve_1d(phi, sch);
  const auto exact = make_field_1d(ax, [s](double x) { return free_gaussian(x, s, 1.0); });
  CHECK(l2_distance(tr.final, exact) < 1e-10);
  CHECK(tr.final.time == doctest::Approx(1.0));
}

TEST_CASE("periodic plane wave rotates at k² + b/L") {
  const PeriodicAxis<double> ax{64, 2 * pi * 3};
  const double L = ax.length, k = 2 * pi * 4 / L, b = 2.5;
  auto phi = make_field_1d(ax, [=](double x) { return std::polar(1 / std::sqrt(L), k * x); });
  Schedule1D<double> sch;
  sch.T = 0.7;
  sch.dt = 1e-2;
  sch.b = b;
  const auto tr = evolve_1d(phi, sch);
  const double omega = k * k + b / L;
  const auto expect = make_field_1d(ax, [=](double x) { return std::polar(1 / std::sqrt(L), k * x - omega * 0.7); });
  CHECK(l2_distance(tr.final, expect) < 1e-10);
  CHECK((tr.final.density() - phi.density()).cwiseAbs().maxCoeff() < 1e-12);
  const auto e = energy_1d(phi, LinePotential<double>{}, b);
  CHECK(e.total() == doctest::Approx(k * k + b / (2 * L)).epsilon(1e-12));
}

TEST_CASE("energy functional on closed-form states") {
  const PeriodicAxis<double> ax{256, 30.0};
  const double s = 0.8;
  auto g = make_field_1d(ax, [s](double x) { return std::pow(pi * s * s, -0.25) * std::exp(-x * x / (2 * s * s)); });
  const auto free = energy_1d(g, LinePotential<double>{}, 0.0);
  CHECK(free.total() == doctest::Approx(1 / (2 * s * s)).epsilon(1e-12));
  CHECK(free.potential == 0.0);
  CHECK(free.interaction == 0.0);
  CHECK(free.imaginary_residue < 1e-12);
  // −∂² + x² has ground state e^{−x²/2} with energy 1.
  auto h = make_field_1d(ax, [](double x) { return std::pow(pi, -0.25) * std::exp(-x * x / 2); });
  const LinePotential<double> V = [](double, double x) { return x * x; };
  CHECK(energy_1d(h, V, 0.0).total() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("time reversal") {
  const PeriodicAxis<double> ax{256, 30.0};
  const auto phi0 = moving_gaussian(ax, 1.0, 0.5);
  GpeStepper1D<double> st(ax, trap(), 3.0);
  auto phi = phi0;
  for (int i = 0; i < 200; ++i) st.step(phi, 5e-3);
  for (int i = 0; i < 200; ++i) st.step(phi, -5e-3);
  CHECK(l2_distance(phi, phi0) < 1e-10);
  CHECK(std::abs(phi.time) < 1e-12);
}

TEST_CASE("norm and energy conservation for an autonomous trap") {
  const PeriodicAxis<double> ax{384, 40.0};
  Schedule1D<double> sch;
  sch.T = 1.0;
  sch.dt = 2e-4;
  sch.V = trap();
  sch.b = 3.0;
  sch.series_stride = 100;
  const auto tr = evolve_1d(moving_gaussian(ax, 1.0, 0.5), sch);
  CHECK(tr.max_norm_step_drift < 1e-12);
  double drift = 0;
  for (double e : tr.energies) drift = std::max(drift, std::abs(e - tr.energies.front()));
  CHECK(drift < 1e-8);
  CHECK(tr.final.edge_magnitude() < 1e-8);
}

TEST_CASE("second-order self-convergence") {
  const PeriodicAxis<double> ax{256, 30.0};
  const auto phi0 = moving_gaussian(ax, 1.0, 0.5);
  Schedule1D<double> sch;
  sch.T = 1.0;
  sch.V = trap();
  sch.b = 3.0;
  sch.series_stride = 0;
  sch.dt = 1e-4;
  const auto ref = evolve_1d(phi0, sch).final;
  double errs[3];
  int i = 0;
  for (double dt : {2e-2, 1e-2, 5e-3}) {
    sch.dt = dt;
    errs[i++] = l2_distance(evolve_1d(phi0, sch).final, ref);
  }
  CHECK(errs[0] / errs[1] == doctest::Approx(4.0).epsilon(0.125));
  CHECK(errs[1] / errs[2] == doctest::Approx(4.0).epsilon(0.125));
}

TEST_CASE("energy rate matches the explicit time dependence") {
  const PeriodicAxis<double> ax{256, 30.0};
  const LinePotential<double> V = [](double t, double x) { return 0.5 * x * x * (1 + 0.3 * std::sin(2 * t)); };
  const auto dV = [](double t, double x) { return 0.5 * x * x * 0.6 * std::cos(2 * t); };
  Schedule1D<double> sch;
  sch.T = 1.0;
  sch.dt = 1e-3;
  sch.V = V;
  sch.b = 2.0;
  const auto tr = evolve_1d(moving_gaussian(ax, 0.5, 0.0), sch);
  // Rebuild the states at the sampled times and compare centred differences to ⟨Φ, ∂_tV Φ⟩.
  GpeStepper1D<double> st(ax, V, 2.0);
  auto phi = moving_gaussian(ax, 0.5, 0.0);
  double worst = 0;
  for (int i = 1; i + 1 < static_cast<int>(tr.energies.size()); ++i) {
    st.step(phi, tr.dt);
    const double fd = (tr.energies[i + 1] - tr.energies[i - 1]) / (2 * tr.dt);
    double expect = 0;
    for (Eigen::Index j = 0; j < ax.n; ++j) expect += dV(phi.time, ax.coord(j)) * std::norm(phi.values[j]) * ax.spacing();
    worst = std::max(worst, std::abs(fd - expect));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gauge covariance under a constant potential shift") {
  const PeriodicAxis<double> ax{256, 30.0};
  const double c = 7.5, T = 0.6;
  Schedule1D<double> sch;
  sch.T = T;
  sch.dt = 1e-3;
  sch.V = trap();
  sch.b = 3.0;
  const auto a = evolve_1d(moving_gaussian(ax, 1.0, 0.5), sch).final;
  sch.V = [](double t, double x) { return trap()(t, x) + 7.5; };
  const auto b = evolve_1d(moving_gaussian(ax, 1.0, 0.5), sch).final;
  CHECK((a.density() - b.density()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(grid_norm(VectorC<double>(a.values * std::polar(1.0, -c * T) - b.values), ax.spacing()) < 1e-10);
}

TEST_CASE("non-finite states abort") {
  const PeriodicAxis<double> ax{32, 10.0};
  auto phi = moving_gaussian(ax, 0.0, 0.0);
  phi.values[3] = cd(std::nan(""), 0);
  Schedule1D<double> sch;
  sch.T = 0.1;
  sch.dt = 0.01;
  CHECK_THROWS_AS(evolve_1d(phi, sch), NumericalError);
}

TEST_CASE("ground states") {
  SUBCASE("harmonic, no interaction") {
    const PeriodicAxis<double> ax{128, 20.0};
    const auto g = ground_state_1d<double>([](double x) { return x * x; }, 0.0, ax);
    CHECK(g.energy == doctest::Approx(1.0).epsilon(1e-10));
    const auto exact = make_field_1d(ax, [](double x) { return std::pow(pi, -0.25) * std::exp(-x * x / 2); });
    CHECK(l2_distance(g.field, exact) < 1e-8);
  }
  SUBCASE("flat profile on a ring") {
    const PeriodicAxis<double> ax{64, 10.0};
    const double b = 4.0;
    const auto g = ground_state_1d<double>({}, b, ax);
    CHECK((g.field.values.real().array() - 1 / std::sqrt(ax.length)).abs().maxCoeff() < 1e-8);
    CHECK(g.energy == doctest::Approx(b / (2 * ax.length)).epsilon(1e-10));
  }
  SUBCASE("thomas-fermi limit") {
    const PeriodicAxis<double> ax{512, 20.0};
    const double b = 400.0;
    const auto g = ground_state_1d<double>([](double x) { return x * x; }, b, ax);
    // ∫(μ − x²)₊/b = 1 gives μ = (3b/4)^{2/3}.
    const double mu = std::pow(0.75 * b, 2.0 / 3.0), R = std::sqrt(mu);
    double worst = 0;
    for (Eigen::Index j = 0; j < ax.n; ++j) {
      const double x = ax.coord(j);
      if (std::abs(x) > 0.7 * R) continue;
      const double tf = (mu - x * x) / b;
      worst = std::max(worst, std::abs(std::norm(g.field.values[j]) - tf) / tf);
    }
    CHECK(worst < 0.03);

    // The minimiser is stationary under the real-time flow.
    Schedule1D<double> sch;
    sch.T = 1.0;
    sch.dt = 1e-4;
    sch.V = [](double, double x) { return x * x; };
    sch.b = b;
    sch.series_stride = 0;
    const auto tr = evolve_1d(g.field, sch);
    CHECK((tr.final.density() - g.field.density()).cwiseAbs().maxCoeff() < 1e-6);
  }
}
