#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "gpr/scattering.hpp"

using namespace gpr;
using Potential = RadialPotential<double>;
constexpr double pi = std::numbers::pi;

namespace {

// Constant barrier V0 on r < 1: j̃'' = (V0/2) j̃ gives j̃ ∝ sinh(k r/μ), k = √(V0/2),
// and the exterior match j̃ = r − μa fixes a = 1 − tanh(k)/k.
double barrier_scattering_length(double V0) {
  const double k = std::sqrt(V0 / 2);
  return 1 - std::tanh(k) / k;
}

double barrier_j_tilde(double V0, double mu, double r) {
  const double k = std::sqrt(V0 / 2);
  return mu * std::sinh(k * r / mu) / (k * std::cosh(k));
}

Potential tabulated_ramp() {
  VectorR<double> s(9);
  for (int i = 0; i < 9; ++i) s[i] = 12.0 * (1.0 - 0.1 * i);
  return Potential::tabulated(s, 1.0);
}

}  // namespace

TEST_CASE("free particle has zero scattering length") {
  const auto sol = solve_zero_energy(Potential::zero(), 1e-3);
  CHECK(sol.a_mu == 0.0);
  for (Eigen::Index i = 0; i < sol.r.size(); i += 97) CHECK(sol.j_tilde[i] == doctest::Approx(sol.r[i]).epsilon(1e-14));
  CHECK(sol.integral_discrepancy == 0.0);
}

TEST_CASE("square barrier matches the closed form") {
  const double mu = 1e-3;
  const auto sol = solve_zero_energy(Potential::square_barrier(10.0), mu);
  const double a_exact = barrier_scattering_length(10.0);
  CHECK(a_exact == doctest::Approx(0.5628879598389264).epsilon(1e-15));
  CHECK(std::abs(sol.a - a_exact) < 1e-8);
  CHECK(std::abs(sol.a_mu - mu * a_exact) < 1e-8 * mu);
  CHECK(sol.integral_discrepancy < 1e-6);
  for (Eigen::Index i = 0; i < sol.r.size(); i += 61)
    CHECK(std::abs(sol.j_tilde[i] - barrier_j_tilde(10.0, mu, sol.r[i])) < 1e-10 * mu);
}

TEST_CASE("hard-core limit approaches the range from below") {
  double previous = 0;
  for (double V0 : {1e2, 1e4, 1e6}) {
    const auto sol = solve_zero_energy(Potential::square_barrier(V0), 1e-3);
    CHECK(sol.a > previous);
    CHECK(sol.a < 1.0);
    CHECK(std::abs(sol.a - barrier_scattering_length(V0)) < 1e-8);
    previous = sol.a;
  }
  CHECK(previous > 0.998);
}

TEST_CASE("integral identity holds for every built-in profile") {
  for (const auto& w : {Potential::square_barrier(10.0), Potential::square_barrier(3.0, 0.6),
                        Potential::smooth_bump(25.0), Potential::smooth_bump(8.0, 0.7), tabulated_ramp()}) {
    CAPTURE(w.name());
    const auto sol = solve_zero_energy(w, 1e-4);
    CHECK(sol.a > 0);
    CHECK(sol.integral_discrepancy < 1e-6);
  }
}

TEST_CASE("solution table invariants") {
  for (const auto& w : {Potential::square_barrier(10.0), Potential::smooth_bump(25.0), tabulated_ramp()}) {
    const double mu = 2e-4;
    const auto sol = solve_zero_energy(w, mu);
    CHECK(sol.j_tilde[0] == 0.0);
    CHECK(sol.j_tilde.minCoeff() >= 0.0);
    for (Eigen::Index i = 1; i < sol.r.size(); ++i) CHECK(sol.j_tilde[i] >= sol.j_tilde[i - 1]);
    CHECK(sol.j_tilde[sol.r.size() - 1] == doctest::Approx(mu - sol.a_mu).epsilon(1e-12));
    CHECK(sol.j_tilde_prime[sol.r.size() - 1] == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("scattering length scales linearly with the range parameter") {
  for (const auto& w : {Potential::square_barrier(10.0), Potential::smooth_bump(25.0)}) {
    const double ref = solve_zero_energy(w, 1.0).a;
    for (double mu : {1e-2, 1e-3, 1e-5}) CHECK(std::abs(solve_zero_energy(w, mu).a - ref) < 1e-8 * ref);
  }
}

TEST_CASE("solver errors") {
  CHECK_THROWS_AS(solve_zero_energy(Potential::square_barrier(10.0), 0.0), DomainError);
  CHECK_THROWS_AS(solve_zero_energy(Potential::square_barrier(10.0), -1e-3), DomainError);
  StepControl<double> strict;
  strict.tolerance = 1e-30;
  strict.max_halvings = 1;
  CHECK_THROWS_AS(solve_zero_energy(Potential::square_barrier(1e4), 1e-3, strict), ResolutionError);
  CHECK_THROWS_AS(Potential::square_barrier(-1.0), DomainError);
  CHECK_THROWS_AS(Potential::square_barrier(1.0, 1.5), DomainError);
  VectorR<double> bad(3);
  bad << 1.0, -0.5, 0.0;
  CHECK_THROWS_AS(Potential::tabulated(bad, 1.0), DomainError);
}

TEST_CASE("correction profile across a range sweep") {
  const auto w = Potential::square_barrier(10.0);
  const double bt = 0.9;
  std::vector<double> ratios, kappa_scaled;
  for (double mu : {1e-3, 1e-4, 1e-5}) {
    CAPTURE(mu);
    const auto sol = solve_zero_energy(w, mu);
    const auto c = build_correction(sol, bt);
    CHECK(c.kappa > 1.0);
    CHECK(c.kappa < c.kappa_upper());
    CHECK(c.R > c.inner_radius);
    CHECK(c.R < c.r_max);
    CHECK(c.tangency_value_residual < 1e-8);
    CHECK(c.tangency_slope_residual < 1e-8);
    CHECK(c.U_height == doctest::Approx(std::pow(mu, 1 - 3 * bt) * sol.a).epsilon(1e-14));
    CHECK(c.u == doctest::Approx(std::sqrt(sol.a * std::pow(mu, 1 - 3 * bt) / 2)).epsilon(1e-14));

    // C¹ matching at μ^β̃ (shell formula against κ j̃) and at R.
    const double m = c.inner_radius;
    const double shell_at_m = c.kappa * (c.A * std::sin(c.u * m) + c.B * std::cos(c.u * m));
    const double shell_slope_at_m = c.kappa * c.u * (c.A * std::cos(c.u * m) - c.B * std::sin(c.u * m));
    CHECK(std::abs(shell_at_m - c.kappa * (m - mu * sol.a)) < 1e-12 * m);
    CHECK(std::abs(shell_slope_at_m - c.kappa) < 1e-12);
    CHECK(std::abs(c.f_tilde(c.R * (1 - 1e-12)) - c.R) < 1e-9 * c.R);
    CHECK(std::abs(c.f_tilde_prime(c.R * (1 - 1e-12)) - 1) < 1e-8);

    const double scale = 8 * pi * sol.a_mu;
    CHECK(std::abs(neutrality_residual(c, w)) / scale < 1e-8);
    CHECK(std::abs(correction_coupling(c) - c.kappa * 8 * pi * sol.a) < 1e-6 * c.kappa * 8 * pi * sol.a);

    ratios.push_back(c.R / m);
    kappa_scaled.push_back((c.kappa - 1) / std::pow(mu, 1 - bt));
  }
  for (double r : ratios) CHECK(std::abs(r / ratios[0] - 1) < 0.2);
  for (double k : kappa_scaled) CHECK(k < 1.0);
}

TEST_CASE("correction coupling tends to 8πa as the range shrinks") {
  const auto w = Potential::smooth_bump(25.0);
  double previous_gap = 1e300;
  for (double mu : {1e-3, 1e-5, 1e-7}) {
    const auto c = build_correction(solve_zero_energy(w, mu), 0.6);
    const double gap = std::abs(correction_coupling(c) / (8 * pi * c.a) - 1);
    CHECK(gap < previous_gap);
    previous_gap = gap;
  }
  CHECK(previous_gap < 1e-2);
}

TEST_CASE("scattering pair evaluation") {
  const auto w = Potential::square_barrier(10.0);
  const double mu = 1e-4;
  const auto sol = solve_zero_energy(w, mu);
  const auto c = build_correction(sol, 0.9);

  SUBCASE("exterior") {
    for (double r : {c.R, 1.5 * c.R, 10.0}) {
      const auto [f, g] = eval_scattering_pair(c, r);
      CHECK(f == 1.0);
      CHECK(g == 0.0);
    }
  }
  SUBCASE("inner region is κ j") {
    for (double r : {0.0, 0.1 * mu, 0.5 * mu, mu, 2 * mu, c.inner_radius}) {
      const auto [f, g] = eval_scattering_pair(c, r);
      CHECK(f == doctest::Approx(c.kappa * sol.j_at(r)).epsilon(1e-13));
      CHECK(f + g == 1.0);
    }
  }
  SUBCASE("bound, monotonicity and domination") {
    double previous = -1;
    for (int i = 0; i <= 4000; ++i) {
      const double r = 1.2 * c.R * i / 4000.0;
      const auto [f, g] = eval_scattering_pair(c, r);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
      CHECK(f >= previous - 1e-15);
      previous = f;
      if (r > 0) CHECK(g <= mu * sol.a / r);
      if (r <= mu) CHECK(f >= sol.j_at(r));
    }
  }
  SUBCASE("negative radius") { CHECK_THROWS_AS(eval_scattering_pair(c, -1e-9), DomainError); }
}

TEST_CASE("neutrality residual") {
  const auto w = Potential::smooth_bump(25.0);
  const auto c = build_correction(solve_zero_energy(w, 1e-4), 0.8);
  const double scale = 8 * pi * c.inner.a_mu;
  CHECK(std::abs(neutrality_residual(c, w)) / scale < 1e-8);

  // Scaling only the inner profile by (1 + δ) leaves a residual δ·κ·8πa_μ.
  const auto parts = neutrality_parts(c, w);
  for (double delta : {0.01, 0.02, 0.05}) {
    const double perturbed = (1 + delta) * parts.interaction - parts.correction;
    CHECK(perturbed / (delta * c.kappa * scale) == doctest::Approx(1.0).epsilon(1e-6));
  }

  const auto zero = build_correction(solve_zero_energy(Potential::zero(), 1e-4), 0.8);
  CHECK(zero.degenerate);
  CHECK(zero.U(zero.R * 0.99) == 0.0);
  CHECK(neutrality_residual(zero, Potential::zero()) == 0.0);
}

TEST_CASE("g bounds across the sweep") {
  const auto w = Potential::square_barrier(10.0);
  const double bt = 0.9;
  std::vector<double> scaled;
  for (double mu : {1e-3, 1e-4, 1e-5}) {
    const auto d = g_norm_diagnostics(build_correction(solve_zero_energy(w, mu), bt));
    CHECK(d.sup_check);
    CHECK(d.worst_ratio <= 1.0);
    scaled.push_back(d.l2_norm / std::pow(mu, 1 + bt / 2));
  }
  for (double s : scaled) CHECK(s < 2 * scaled[0]);
  const auto z = g_norm_diagnostics(build_correction(solve_zero_energy(Potential::zero(), 1e-4), bt));
  CHECK(z.l2_norm == 0.0);
  CHECK(z.sup_check);
}

TEST_CASE("correction preconditions") {
  const auto sol = solve_zero_energy(Potential::square_barrier(10.0), 1e-4);
  CHECK_THROWS_AS(build_correction(sol, 0.3), DomainError);
  CHECK_THROWS_AS(build_correction(sol, 1.0), DomainError);
  // μa ≥ μ^β̃ leaves no room for the shell.
  const auto large = solve_zero_energy(Potential::square_barrier(1e4), 1e3);
  CHECK_THROWS_AS(build_correction(large, 0.9), DomainError);
}
