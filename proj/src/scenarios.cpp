#include <Eigen/Core>
#include <boost/version.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>

#include "gpr/confined3d.hpp"
#include "gpr/gpe1d.hpp"
#include "gpr/harness.hpp"
#include "gpr/manybody.hpp"
#include "gpr/scattering.hpp"
#include "gpr/transverse.hpp"

#ifndef GPR_VERSION
#define GPR_VERSION "0.0.0"
#endif

namespace gpr::harness {

namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;
using cd = std::complex<double>;

/// What a runner hands back: scalar metrics for assertions plus free-form results for the summary.
struct Outcome {
  std::map<std::string, double> metrics;
  Json results = Json::object();
  std::vector<std::string> files;
};

/// A runner parses its configuration eagerly and returns the deferred computation, so that
/// unknown keys are reported before any expensive work starts.
using Job = std::function<Outcome(const fs::path&)>;

double max_of(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

RadialPotential<double> read_interaction(const Config& cfg, const std::string& section) {
  const std::string kind = cfg.str(section + ".potential", "zero");
  const double range = cfg.real(section + ".range", 1.0);
  try {
    if (kind == "zero") return RadialPotential<double>::zero();
    if (kind == "square") return RadialPotential<double>::square_barrier(cfg.real(section + ".V0"), range);
    if (kind == "bump") return RadialPotential<double>::smooth_bump(cfg.real(section + ".V0"), range);
    if (kind == "table") {
      const auto s = cfg.reals(section + ".samples");
      return RadialPotential<double>::tabulated(Eigen::Map<const VectorR<double>>(s.data(), Eigen::Index(s.size())), range);
    }
  } catch (const DomainError& e) {
    cfg.fail(section + ".potential", e.what());
  }
  cfg.fail(section + ".potential", "unknown interaction '" + kind + "' (zero, square, bump, table)");
}

/// V⊥(y) = c1·y1² + c2·y2² + c4·|y|⁴.
struct PerpSpec {
  double c1 = 1, c2 = 1, c4 = 0;
  double operator()(double a, double b) const {
    const double r2 = a * a + b * b;
    return c1 * a * a + c2 * b * b + c4 * r2 * r2;
  }
  bool harmonic() const { return c4 == 0; }
};

PerpSpec read_perp(const Config& cfg) {
  PerpSpec p{cfg.real("transverse.c1", 1), cfg.real("transverse.c2", 1), cfg.real("transverse.c4", 0)};
  if (!(p.c1 > 0)) cfg.fail("transverse.c1", "must be positive for a confining trap");
  if (!(p.c2 > 0)) cfg.fail("transverse.c2", "must be positive for a confining trap");
  if (p.c4 < 0) cfg.fail("transverse.c4", "must be non-negative");
  return p;
}

/// V∥(t, x) = (1 + A·sin Ωt)·(h·x² + c·cos x).
struct LineSpec {
  double harmonic = 0, cosine = 0, modulation = 0, frequency = 0;
  double operator()(double t, double x) const {
    return (1 + modulation * std::sin(frequency * t)) * (harmonic * x * x + cosine * std::cos(x));
  }
  bool zero() const { return harmonic == 0 && cosine == 0; }
  bool autonomous() const { return modulation == 0 || zero(); }
  LinePotential<double> line() const {
    if (zero()) return {};
    return [s = *this](double t, double x) { return s(t, x); };
  }
  SpacePotential<double> space() const {
    if (zero()) return {};
    return [s = *this](double t, double x, double, double) { return s(t, x); };
  }
};

LineSpec read_line(const Config& cfg) {
  return {cfg.real("longitudinal.harmonic", 0), cfg.real("longitudinal.cosine", 0),
          cfg.real("longitudinal.modulation", 0), cfg.real("longitudinal.frequency", 0)};
}

/// Initial longitudinal profile: a Gaussian packet or a plane wave exp(2πi·mode·x/L).
struct ProfileSpec {
  std::string shape = "gaussian";
  double center = 0, width = 1, kick = 0;
  long mode = 0;
  std::function<cd(double)> on(const PeriodicAxis<double>& ax) const {
    if (shape == "plane_wave") {
      const double k = 2 * pi * mode / ax.length;
      return [k](double x) { return std::polar(1.0, k * x); };
    }
    return [s = *this](double x) {
      const double u = (x - s.center) / s.width;
      return std::exp(-u * u / 2) * std::polar(1.0, s.kick * x);
    };
  }
};

ProfileSpec read_profile(const Config& cfg) {
  ProfileSpec p;
  p.shape = cfg.str("profile.shape", "gaussian");
  if (p.shape != "gaussian" && p.shape != "plane_wave")
    cfg.fail("profile.shape", "unknown profile '" + p.shape + "' (gaussian, plane_wave)");
  p.center = cfg.real("profile.center", 0);
  p.width = cfg.real("profile.width", 1);
  p.kick = cfg.real("profile.kick", 0);
  p.mode = cfg.integer("profile.mode", 0);
  if (!(p.width > 0)) cfg.fail("profile.width", "must be positive");
  return p;
}

PeriodicAxis<double> read_axis(const Config& cfg, const std::string& n_key, const std::string& len_key) {
  const long n = cfg.integer(n_key);
  const double L = cfg.real(len_key);
  if (n < 4 || n % 2) cfg.fail(n_key, "need an even number of points, at least 4");
  if (!(L > 0)) cfg.fail(len_key, "must be positive");
  return {n, L};
}

Field1D<double> normalised_profile(const PeriodicAxis<double>& ax, const ProfileSpec& p) {
  auto f = make_field_1d(ax, p.on(ax));
  f.values /= f.norm();
  return f;
}

Snapshot snapshot_of(const Field1D<double>& f) {
  return {{f.axis.n}, {f.axis.spacing()}, f.time, {f.values.data(), f.values.data() + f.values.size()}};
}

// x is the fastest index, matching the column-major nx × ny² storage.
Snapshot snapshot_of(const Field3D<double>& f) {
  return {{f.x_axis.n, f.y_axis.n, f.y_axis.n},
          {f.x_axis.spacing(), f.y_axis.spacing(), f.y_axis.spacing()},
          f.time,
          {f.values.data(), f.values.data() + f.values.size()}};
}

// ---------------------------------------------------------------------------------------------

Job scatter_job(const Config& cfg) {
  const auto w = read_interaction(cfg, "interaction");
  std::vector<double> mus;
  if (cfg.has("scatter.mu")) {
    mus = cfg.reals("scatter.mu");
  } else {
    const double N = cfg.real("scatter.N"), eps = cfg.real("scatter.epsilon");
    if (!(N > 0) || !(eps > 0)) cfg.fail("scatter.N", "N and epsilon must be positive");
    mus = {eps * eps / N};
  }
  for (double m : mus)
    if (!(m > 0)) cfg.fail("scatter.mu", "mu must be positive");
  const std::optional<double> bt =
      cfg.has("scatter.beta_tilde") ? std::optional<double>(cfg.real("scatter.beta_tilde")) : std::nullopt;
  StepControl<double> ode;
  ode.tolerance = cfg.real("scatter.ode_tolerance", ode.tolerance);
  ode.initial_steps = static_cast<int>(cfg.integer("scatter.initial_steps", ode.initial_steps));
  ode.max_halvings = static_cast<int>(cfg.integer("scatter.max_halvings", ode.max_halvings));
  BisectionControl<double> bis;
  bis.relative_tolerance = cfg.real("scatter.bisection_tolerance", bis.relative_tolerance);
  const long radial_points = cfg.integer("scatter.radial_points", 0);
  const bool square = w.kind() == RadialPotential<double>::Kind::SquareBarrier;
  const double V0 = square ? cfg.real("interaction.V0") : 0.0;

  return [=](const fs::path& dir) {
    Outcome out;
    CsvTable table({"mu [length]", "a [length]", "a_mu [length]", "kappa [1]", "kappa_upper [1]", "R [length]",
                    "R_over_mu_bt [1]", "neutrality_rel [1]", "coupling_rel_error [1]", "kappa_excess_scaled [1]",
                    "g_sup_ratio [1]", "g_l2_scaled [1]", "integral_discrepancy [1]"});
    std::vector<double> a_vals, discrepancy, ratios, neutrality, coupling, excess, gsup, gl2, tangency;
    bool window = true;
    Json rows = Json::array();
    for (std::size_t i = 0; i < mus.size(); ++i) {
      const double mu = mus[i];
      const auto sol = solve_zero_energy(w, mu, ode);
      a_vals.push_back(sol.a);
      discrepancy.push_back(sol.integral_discrepancy);
      Json row = {{"mu", mu}, {"a", sol.a}, {"a_mu", sol.a_mu}, {"steps", sol.steps},
                  {"residuals", {{"integral_discrepancy", sol.integral_discrepancy}, {"refinement", sol.refinement_change}}}};
      const double nan = std::numeric_limits<double>::quiet_NaN();
      std::vector<double> csv = {mu, sol.a, sol.a_mu, nan, nan, nan, nan, nan, nan, nan, nan, nan, sol.integral_discrepancy};
      if (bt) {
        const auto c = build_correction(sol, *bt, bis);
        const double scale = 8 * pi * sol.a_mu;
        const double neut = scale > 0 ? std::abs(neutrality_residual(c, w)) / scale : 0.0;
        const double target = c.kappa * 8 * pi * sol.a;
        const double coup = target > 0 ? std::abs(correction_coupling(c) - target) / target : 0.0;
        const auto g = g_norm_diagnostics(c);
        const double ratio = c.R / c.inner_radius;
        const double kex = (c.kappa - 1) / std::pow(mu, 1 - *bt);
        const double gsc = g.l2_norm / std::pow(mu, 1 + *bt / 2);
        window = window && (c.degenerate || (c.kappa > 1 && c.kappa < c.kappa_upper()));
        ratios.push_back(ratio);
        neutrality.push_back(neut);
        coupling.push_back(coup);
        excess.push_back(kex);
        gsup.push_back(g.worst_ratio);
        gl2.push_back(gsc);
        tangency.push_back(std::max(c.tangency_value_residual, c.tangency_slope_residual));
        row["kappa"] = c.kappa;
        row["kappa_upper"] = c.kappa_upper();
        row["R"] = c.R;
        row["R_over_mu_bt"] = ratio;
        row["U_height"] = c.U_height;
        row["residuals"]["tangency_value"] = c.tangency_value_residual;
        row["residuals"]["tangency_slope"] = c.tangency_slope_residual;
        row["residuals"]["neutrality"] = neut;
        row["residuals"]["coupling"] = coup;
        row["g_l2"] = g.l2_norm;
        row["g_sup_ratio"] = g.worst_ratio;
        csv = {mu, sol.a, sol.a_mu, c.kappa, c.kappa_upper(), c.R, ratio, neut, coup, kex, g.worst_ratio, gsc,
               sol.integral_discrepancy};
        if (radial_points > 1) {
          CsvTable radial({"r [length]", "f [1]", "g [1]", "w [energy]", "U [energy]"});
          const double r_end = 2 * std::max(c.R, mu);
          for (long k = 0; k < radial_points; ++k) {
            const double r = r_end * static_cast<double>(k) / static_cast<double>(radial_points - 1);
            const auto [f, gg] = eval_scattering_pair(c, r);
            radial.row({r, f, gg, w.scaled(r, mu), c.U(r)});
          }
          const std::string name = "radial_" + std::to_string(i) + ".csv";
          radial.write(dir / name);
          out.files.push_back(name);
        }
      }
      table.row(csv);
      rows.push_back(row);
    }
    table.write(dir / "scatter.csv");
    out.files.insert(out.files.begin(), "scatter.csv");

    out.metrics["a"] = a_vals.front();
    double spread = 0;
    for (double a : a_vals) spread = std::max(spread, a_vals.front() > 0 ? std::abs(a / a_vals.front() - 1) : std::abs(a));
    out.metrics["a_scaling_spread"] = spread;
    out.metrics["integral_discrepancy"] = max_of(discrepancy);
    if (square) {
      const double k = std::sqrt(V0 / 2);
      const double exact = w.range() - std::tanh(k * w.range()) / k;
      double err = 0;
      for (double a : a_vals) err = std::max(err, std::abs(a - exact));
      out.metrics["a_closed_form_error"] = err;
      out.results["a_closed_form"] = exact;
    }
    if (bt) {
      out.metrics["kappa_window"] = window ? 1 : 0;
      double rs = 0;
      for (double r : ratios) rs = std::max(rs, std::abs(r / ratios.front() - 1));
      out.metrics["R_ratio_max"] = max_of(ratios);
      out.metrics["R_ratio_spread"] = rs;
      out.metrics["tangency_residual"] = max_of(tangency);
      out.metrics["neutrality_residual"] = max_of(neutrality);
      out.metrics["coupling_error"] = max_of(coupling);
      out.metrics["kappa_excess_scaled_max"] = max_of(excess);
      out.metrics["g_sup_ratio"] = max_of(gsup);
      out.metrics["g_l2_scaled_max"] = max_of(gl2);
      out.metrics["g_l2_scaled_growth"] = gl2.front() > 0 ? max_of(gl2) / gl2.front() : 0.0;
    }
    out.results["interaction"] = {{"potential", w.name()}, {"range", w.range()}, {"sup", w.sup_bound()}};
    out.results["sweep"] = rows;
    return out;
  };
}

// ---------------------------------------------------------------------------------------------

Job trap_job(const Config& cfg) {
  const PerpSpec V = read_perp(cfg);
  const auto axis = read_axis(cfg, "trap.n", "trap.extent");
  const std::string method = cfg.str("trap.method", "flow");
  if (method != "flow" && method != "dense") cfg.fail("trap.method", "expected flow or dense");
  GroundStateControl<double> ctl;
  ctl.residual_tolerance = cfg.real("trap.residual_tolerance", ctl.residual_tolerance);
  ctl.decay_tolerance = cfg.real("trap.decay_tolerance", ctl.decay_tolerance);
  ctl.max_iterations = static_cast<int>(cfg.integer("trap.max_iterations", ctl.max_iterations));
  const std::optional<double> a = cfg.has("trap.a") ? std::optional<double>(cfg.real("trap.a")) : std::nullopt;

  return [=](const fs::path& dir) {
    Outcome out;
    const VectorR<double> samples = sample_2d(axis, V);
    const TransverseMode<double> mode =
        method == "flow" ? ground_state_2d(samples, axis, ctl) : transverse_basis(samples, axis, ctl.decay_tolerance).mode;
    out.metrics["E0"] = mode.E0;
    out.metrics["quartic"] = mode.quartic;
    out.metrics["b_per_a"] = 8 * pi * mode.quartic;
    out.metrics["norm_error"] = std::abs(mode.norm() - 1);
    out.metrics["residual"] = mode.residual;
    out.metrics["chi_min_ratio"] = mode.chi.minCoeff() / mode.chi.maxCoeff();
    if (V.harmonic()) {
      const double E0 = std::sqrt(V.c1) + std::sqrt(V.c2);
      const double quartic = std::pow(V.c1 * V.c2, 0.25) / (2 * pi);
      out.metrics["E0_error"] = std::abs(mode.E0 - E0);
      out.metrics["quartic_error"] = std::abs(mode.quartic - quartic);
      out.metrics["b_per_a_error"] = std::abs(8 * pi * mode.quartic - 8 * pi * quartic);
      out.results["harmonic_reference"] = {{"E0", E0}, {"quartic", quartic}, {"b_per_a", 8 * pi * quartic}};
    }
    out.results["E0"] = mode.E0;
    out.results["quartic"] = mode.quartic;
    out.results["b_per_a"] = 8 * pi * mode.quartic;
    if (a) out.results["b"] = coupling_b(*a, mode);
    out.results["iterations"] = mode.iterations;
    out.results["method"] = method;

    CsvTable slice({"y1 [length]", "chi [1/length]"});
    const Eigen::Index mid = axis.n / 2;
    for (Eigen::Index i = 0; i < axis.n; ++i) slice.row({axis.coord(i), mode.chi[i + axis.n * mid]});
    slice.write(dir / "chi_slice.csv");
    Snapshot s{{axis.n, axis.n}, {axis.spacing(), axis.spacing()}, 0.0, {}};
    for (Eigen::Index p = 0; p < mode.chi.size(); ++p) s.data.emplace_back(mode.chi[p], 0.0);
    write_snapshot(dir / "chi.gpr", s);
    out.files = {"chi_slice.csv", "chi.gpr"};
    return out;
  };
}

// ---------------------------------------------------------------------------------------------

Job evolve1d_job(const Config& cfg) {
  const auto axis = read_axis(cfg, "evolve1d.n", "evolve1d.length");
  const double T = cfg.real("evolve1d.T"), dt = cfg.real("evolve1d.dt");
  if (!(T > 0)) cfg.fail("evolve1d.T", "must be positive");
  if (!(dt > 0)) cfg.fail("evolve1d.dt", "must be positive");
  const LineSpec V = read_line(cfg);
  const ProfileSpec P = read_profile(cfg);
  const int snapshot_stride = static_cast<int>(cfg.integer("evolve1d.snapshot_stride", 0));
  const int series_stride = static_cast<int>(cfg.integer("evolve1d.series_stride", 1));
  const bool convergence = cfg.flag("evolve1d.convergence", false);

  // b directly, or 8πa∫|χ|⁴ for the configured transverse trap.
  std::function<double()> coupling;
  if (cfg.has("evolve1d.b")) {
    const double b = cfg.real("evolve1d.b");
    coupling = [b] { return b; };
  } else if (cfg.has("evolve1d.a")) {
    const double a = cfg.real("evolve1d.a");
    const PerpSpec Vp = read_perp(cfg);
    const auto ty = read_axis(cfg, "transverse.n", "transverse.extent");
    coupling = [=] { return coupling_b(a, transverse_basis(sample_2d(ty, Vp), ty).mode); };
  } else {
    coupling = [] { return 0.0; };
  }

  return [=](const fs::path& dir) {
    Outcome out;
    const double b = coupling();
    const Field1D<double> phi0 = normalised_profile(axis, P);
    Schedule1D<double> s;
    s.T = T;
    s.dt = dt;
    s.V = V.line();
    s.b = b;
    s.sample_stride = snapshot_stride;
    s.series_stride = series_stride;
    const auto tr = evolve_1d(phi0, s);

    CsvTable series({"t [time]", "norm [1]", "energy [energy]"});
    double drift = 0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      series.row({tr.times[i], tr.norms[i], tr.energies[i]});
      drift = std::max(drift, std::abs(tr.energies[i] - tr.energies.front()));
    }
    series.write(dir / "series.csv");
    out.files.push_back("series.csv");
    fs::create_directories(dir / "snapshots");
    for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "phi_%04zu.gpr", i);
      write_snapshot(dir / "snapshots" / name, snapshot_of(tr.snapshots[i]));
      out.files.push_back(std::string("snapshots/") + name);
    }

    out.metrics["max_norm_step_drift"] = tr.max_norm_step_drift;
    out.metrics["energy_drift"] = drift;
    out.metrics["autonomous"] = V.autonomous() ? 1 : 0;
    out.results["b"] = b;
    out.results["steps"] = tr.steps;
    out.results["dt"] = tr.dt;
    out.results["final_energy"] = tr.energies.back();

    if (P.shape == "plane_wave" && V.zero()) {
      const double k = 2 * pi * static_cast<double>(P.mode) / axis.length;
      const double exact = k * k + b / axis.length;
      const cd overlap = phi0.values.dot(tr.final.values) * axis.spacing();
      double measured = -std::arg(overlap) / T;
      measured += 2 * pi / T * std::round((exact - measured) * T / (2 * pi));
      out.metrics["frequency_error"] = std::abs(measured - exact);
      out.results["frequency"] = {{"measured", measured}, {"exact", exact}};
    }

    if (convergence) {
      Schedule1D<double> c = s;
      c.series_stride = 0;
      c.sample_stride = 0;
      c.dt = dt / 256;
      const auto ref = evolve_1d(phi0, c).final;
      std::vector<double> errs;
      for (double f : {1.0, 0.5, 0.25}) {
        c.dt = dt * f;
        const auto fin = evolve_1d(phi0, c).final;
        errs.push_back(grid_norm(VectorC<double>(fin.values - ref.values), axis.spacing()));
      }
      const double r1 = errs[0] / errs[1], r2 = errs[1] / errs[2];
      out.metrics["order_ratio_1"] = r1;
      out.metrics["order_ratio_2"] = r2;
      out.metrics["order_ratio_deviation"] = std::max(std::abs(r1 - 4), std::abs(r2 - 4));
      out.results["convergence"] = {{"dt", {dt, dt / 2, dt / 4}}, {"errors", errs}, {"reference_dt", dt / 256}};
    }
    return out;
  };
}

// ---------------------------------------------------------------------------------------------

Job reduce3d_job(const Config& cfg, int jobs) {
  ReductionScenario<double> sc;
  sc.x_axis = read_axis(cfg, "reduce3d.x_n", "reduce3d.x_length");
  sc.scaled_axis = read_axis(cfg, "reduce3d.y_n", "reduce3d.y_extent");
  const PerpSpec Vp = read_perp(cfg);
  const LineSpec V = read_line(cfg);
  const ProfileSpec P = read_profile(cfg);
  sc.V_perp = Vp;
  sc.V_par = V.space();
  sc.time_dependent = !V.autonomous();
  sc.a = cfg.real("reduce3d.a");
  if (sc.a < 0) cfg.fail("reduce3d.a", "must be non-negative");
  sc.T = cfg.real("reduce3d.T");
  sc.dt_factor = cfg.real("reduce3d.dt_factor", sc.dt_factor);
  sc.decay_tolerance = cfg.real("reduce3d.decay_tolerance", sc.decay_tolerance);
  sc.phi0 = P.on(sc.x_axis);
  sc.jobs = jobs;
  const std::vector<double> eps = cfg.reals("reduce3d.epsilon");
  const bool control = cfg.flag("reduce3d.control", false);
  sc.keep_fields = cfg.flag("reduce3d.snapshots", true);

  return [=](const fs::path& dir) {
    Outcome out;
    const auto table = reduction_sweep(sc, eps);
    const std::vector<std::string> header = {"epsilon [length]", "err_L2 [1]", "orthogonal_mass [1]", "energy_drift [energy]"};
    CsvTable csv(header);
    Json rows = Json::array();
    std::vector<double> drift, norm_drift;
    if (sc.keep_fields) fs::create_directories(dir / "snapshots");
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& r = table.rows[i];
      csv.row({r.epsilon, r.error, r.orthogonal_mass, r.energy_drift});
      drift.push_back(r.energy_drift);
      norm_drift.push_back(r.norm_drift);
      rows.push_back({{"epsilon", r.epsilon}, {"err_L2", r.error}, {"orthogonal_mass", r.orthogonal_mass},
                      {"energy_drift", r.energy_drift}, {"norm_drift", r.norm_drift}, {"dt", r.dt}, {"steps", r.steps}});
      if (r.field) {
        const std::string a = "snapshots/psi_" + std::to_string(i) + ".gpr", b = "snapshots/phi_" + std::to_string(i) + ".gpr";
        write_snapshot(dir / a, snapshot_of(*r.field));
        write_snapshot(dir / b, snapshot_of(*r.profile));
        out.files.push_back(a);
        out.files.push_back(b);
      }
    }
    csv.write(dir / "reduce3d.csv");
    out.files.insert(out.files.begin(), "reduce3d.csv");
    const auto ratios = table.ratios();
    out.metrics["err_decreasing"] = table.error_decreasing() ? 1 : 0;
    out.metrics["ratio_max"] = ratios.empty() ? 0.0 : max_of(ratios);
    out.metrics["orthogonal_mass_decreasing"] = table.orthogonal_mass_decreasing() ? 1 : 0;
    out.metrics["energy_drift_max"] = max_of(drift);
    out.metrics["norm_drift_max"] = max_of(norm_drift);
    out.results["b"] = table.b;
    out.results["quartic"] = table.quartic;
    out.results["E0"] = table.E0;
    out.results["rows"] = rows;
    out.results["ratios"] = ratios;

    if (control) {
      auto linear = sc;
      linear.a = 0;
      linear.keep_fields = false;
      const auto ctab = reduction_sweep(linear, eps);
      CsvTable c(header);
      std::vector<double> errs;
      for (const auto& r : ctab.rows) {
        c.row({r.epsilon, r.error, r.orthogonal_mass, r.energy_drift});
        errs.push_back(r.error);
      }
      c.write(dir / "control.csv");
      out.files.push_back("control.csv");
      out.metrics["control_max"] = max_of(errs);
      out.results["control_errors"] = errs;
    }
    return out;
  };
}

// ---------------------------------------------------------------------------------------------

Job count_job(const Config& cfg) {
  const long N = cfg.integer("count.N");
  if (N < 1 || N > 4) cfg.fail("count.N", "supported particle numbers are 1 to 4");
  ManyBodyHamiltonian<double> h;
  const auto x = read_axis(cfg, "count.nx", "count.x_length");
  const long ny = cfg.integer("count.y_n");
  const double y_extent = cfg.real("count.y_extent");
  h.epsilon = cfg.real("count.epsilon", 1.0);
  if (!(h.epsilon > 0)) cfg.fail("count.epsilon", "must be positive");
  if (ny < 2 || !(y_extent > 0)) cfg.fail("count.y_n", "need at least 2 transverse points and a positive extent");
  h.grid = {x, {ny, y_extent * h.epsilon}};
  h.mu = cfg.real("count.mu", h.epsilon * h.epsilon / static_cast<double>(N));
  const PerpSpec Vp = read_perp(cfg);
  h.V_perp = Vp;
  h.V_par = read_line(cfg).space();
  h.w = read_interaction(cfg, "interaction");
  const ProfileSpec P = read_profile(cfg);
  const double xi = cfg.real("count.xi");
  const long samples = cfg.integer("count.samples");
  if (samples < 0) cfg.fail("count.samples", "must be non-negative");
  const auto seed = static_cast<std::uint64_t>(cfg.integer("count.seed"));
  const std::string family = cfg.str("count.family", "near");
  if (family != "near" && family != "random" && family != "mixed")
    cfg.fail("count.family", "expected near, random or mixed");

  std::vector<double> weight_N, weight_xi;
  if (cfg.has("count.weight_N")) {
    weight_N = cfg.reals("count.weight_N");
    weight_xi = cfg.reals("count.weight_xi");
    for (double v : weight_N)
      if (!(v >= 1) || v != std::floor(v)) cfg.fail("count.weight_N", "particle numbers must be positive integers");
    for (double v : weight_xi)
      if (!(v > 0 && v < 0.5)) cfg.fail("count.weight_xi", "xi = " + num(v) + " lies outside 0 < xi < 1/2");
  }

  const long pair_samples = cfg.integer("pair.samples", 0);
  struct PairSpec {
    RadialPotential<double> w = RadialPotential<double>::zero();
    double mu = 0, beta_tilde = 0;
    PeriodicAxis<double> axis;
  } pair;
  if (pair_samples > 0) {
    pair.w = read_interaction(cfg, "pair");
    pair.mu = cfg.real("pair.mu");
    pair.beta_tilde = cfg.real("pair.beta_tilde");
    pair.axis = read_axis(cfg, "pair.n", "pair.length");
  }

  return [=](const fs::path& dir) {
    Outcome out;
    ManyBodyHamiltonian<double> hh = h;
    if (!hh.w.is_zero()) {
      // b = 8πa∫|χ|⁴ from the discrete unscaled mode.
      const PeriodicAxis<double> unscaled{ny, y_extent};
      const auto mode = transverse_basis(sample_2d(unscaled, Vp), unscaled, std::numeric_limits<double>::infinity()).mode;
      hh.b = coupling_b(solve_zero_energy(hh.w, 1.0).a, mode);
    }
    ManyBodyOperator<double> op(hh);
    const Field1D<double> Phi = normalised_profile(hh.grid.x, P);
    const VectorC<double> phi = op.orbital(Phi);
    const WeightTable<double> w(static_cast<int>(N), xi);
    std::mt19937_64 rng(seed);

    const auto product = alpha_functional(product_state(phi, static_cast<int>(N)), Phi, op, w);
    out.metrics["product_alpha_error"] = std::abs(product.total() - 0.5 * std::pow(double(N), -xi));

    CsvTable csv({"sample [1]", "alpha [1]", "trace_dist [1]", "trace_rhs [1]", "bound_lhs [1]", "bound_rhs [1]", "pass [1]"});
    long trace_fail = 0, alpha_fail = 0;
    double trace_slack = std::numeric_limits<double>::infinity(), alpha_slack = trace_slack;
    double identity = 0, orth = 0, defect = 0;
    std::uniform_real_distribution<double> coin;
    for (long i = 0; i < samples; ++i) {
      const bool near = family == "near" || (family == "mixed" && coin(rng) < 0.5);
      const auto psi = near ? random_near_condensate(phi, static_cast<int>(N), rng)
                            : random_symmetric_state<double>(static_cast<int>(N), phi.size(), rng);
      defect = std::max(defect, symmetry_defect(psi));
      const auto comps = projector_components(psi, phi);
      VectorC<double> sum = VectorC<double>::Zero(psi.tensor.size());
      for (std::size_t k = 0; k < comps.size(); ++k) {
        sum += comps[k].tensor;
        for (std::size_t l = k + 1; l < comps.size(); ++l)
          orth = std::max(orth, std::abs(comps[k].tensor.dot(comps[l].tensor)));
      }
      identity = std::max(identity, (sum - psi.tensor).norm());

      const auto a = alpha_functional(psi, Phi, op, w);
      bool pass = true;
      CondensationBounds<double> actual;
      for (double gap : {a.energy_gap, 0.0}) {
        const auto c = condensation_bounds(psi, phi, w, gap);
        if (gap == a.energy_gap) actual = c;
        if (!c.trace_bound()) ++trace_fail, pass = false;
        if (!c.alpha_bound()) ++alpha_fail, pass = false;
        trace_slack = std::min(trace_slack, c.upper_trace - c.trace_distance);
        alpha_slack = std::min(alpha_slack, c.upper_alpha - c.alpha);
      }
      csv.row({double(i), actual.alpha, actual.trace_distance, actual.upper_trace, actual.alpha, actual.upper_alpha,
               pass ? 1.0 : 0.0});
    }
    csv.write(dir / "count.csv");
    out.files.push_back("count.csv");
    out.metrics["samples"] = double(samples);
    out.metrics["trace_failures"] = double(trace_fail);
    out.metrics["alpha_failures"] = double(alpha_fail);
    if (samples > 0) {
      out.metrics["trace_slack_min"] = trace_slack;
      out.metrics["alpha_slack_min"] = alpha_slack;
      out.metrics["projector_identity_max"] = identity;
      out.metrics["projector_orthogonality_max"] = orth;
      out.metrics["symmetry_defect_max"] = defect;
    }
    out.results["sp_dim"] = phi.size();
    out.results["transverse_ground"] = op.E0_over_eps2();
    out.results["b"] = hh.b;
    out.results["product_alpha"] = product.total();

    if (!weight_N.empty()) {
      CsvTable wt({"N [1]", "xi [1]", "sup_first [1]", "limit_first [1]", "sup_second [1]", "limit_second [1]",
                   "holds [1]"});
      bool all = true;
      double r1 = 0, r2 = 0;
      for (double n : weight_N)
        for (double x : weight_xi) {
          const auto bnd = weight_bounds(WeightTable<double>(static_cast<int>(n), x));
          all = all && bnd.holds();
          r1 = std::max(r1, bnd.sup_first / bnd.limit_first);
          r2 = std::max(r2, bnd.sup_second / bnd.limit_second);
          wt.row({n, x, bnd.sup_first, bnd.limit_first, bnd.sup_second, bnd.limit_second, bnd.holds() ? 1.0 : 0.0});
        }
      wt.write(dir / "weights.csv");
      out.files.push_back("weights.csv");
      out.metrics["weight_bounds_hold"] = all ? 1 : 0;
      out.metrics["weight_first_ratio_max"] = r1;
      out.metrics["weight_second_ratio_max"] = r2;
    }

    if (pair_samples > 0) {
      const auto c = build_correction(solve_zero_energy(pair.w, pair.mu), pair.beta_tilde);
      const ProductGrid3D<double> grid{pair.axis, pair.axis};
      ScatteringFormEvaluator<double> form(grid, c, pair.w);
      std::mt19937_64 prng(seed ^ 0x9e3779b97f4a7c15ULL);
      CsvTable pt({"sample [1]", "gradient [energy]", "potential [energy]", "total [energy]"});
      double lowest = std::numeric_limits<double>::infinity();
      for (long i = 0; i < pair_samples; ++i) {
        const auto f = form(random_pair_state(grid, c, prng));
        lowest = std::min(lowest, f.total());
        pt.row({double(i), f.gradient, f.potential, f.total()});
      }
      pt.write(dir / "pair.csv");
      out.files.push_back("pair.csv");
      out.metrics["pair_form_min"] = lowest;
      out.results["pair"] = {{"mu", pair.mu}, {"R", c.R}, {"kappa", c.kappa}, {"sp_dim", grid.size()}};
    }
    return out;
  };
}

// ---------------------------------------------------------------------------------------------

Job validate_job(const Config& cfg) {
  const double delta = cfg.real("validate.delta");
  std::vector<std::pair<double, double>> seq;
  if (cfg.has("validate.sequence")) {
    const std::string law = cfg.str("validate.sequence");
    const long count = cfg.integer("validate.count");
    if (count < 1) cfg.fail("validate.count", "must be positive");
    double p = 0;
    if (law == "power") {
      p = cfg.real("validate.exponent");
      if (!(p > 0)) cfg.fail("validate.exponent", "must be positive");
    } else if (law == "geometric") {
      p = cfg.real("validate.base");
      if (!(p > 1)) cfg.fail("validate.base", "must exceed 1");
    } else {
      cfg.fail("validate.sequence", "expected power (epsilon = n^-exponent) or geometric (epsilon = base^-n)");
    }
    for (long n = 1; n <= count; ++n) {
      const double nn = static_cast<double>(n);
      seq.emplace_back(nn, law == "power" ? std::pow(nn, -p) : std::pow(p, -nn));
    }
  } else {
    const auto Ns = cfg.reals("validate.N"), eps = cfg.reals("validate.epsilon");
    if (Ns.size() != eps.size()) cfg.fail("validate.epsilon", "N and epsilon lists differ in length");
    for (std::size_t i = 0; i < Ns.size(); ++i) seq.emplace_back(Ns[i], eps[i]);
  }
  std::optional<std::pair<double, double>> window;
  if (cfg.has("validate.d") || cfg.has("validate.beta_tilde"))
    window = std::make_pair(cfg.real("validate.d"), cfg.real("validate.beta_tilde"));

  return [=](const fs::path& dir) {
    Outcome out;
    const auto rep = validate_admissibility(seq, delta, window);
    CsvTable csv({"N [1]", "epsilon [length]", "N_eps_delta [1]"});
    for (const auto& r : rep.rows) csv.row({r.N, r.epsilon, r.value});
    csv.write(dir / "admissibility.csv");
    out.files.push_back("admissibility.csv");
    out.metrics["admissible"] = rep.admissible ? 1 : 0;
    out.metrics["tail_decreasing"] = rep.tail_decreasing ? 1 : 0;
    out.metrics["last_value"] = rep.rows.back().value;
    if (rep.window_ok) out.metrics["window_ok"] = *rep.window_ok ? 1 : 0;
    out.results["delta"] = delta;
    out.results["window_upper"] = rep.window_upper;
    out.results["verdict"] = rep.admissible ? "admissible" : "not admissible";
    return out;
  };
}

Job make_job(const Config& cfg, const std::string& kind, int jobs) {
  if (kind == "scatter") return scatter_job(cfg);
  if (kind == "trap") return trap_job(cfg);
  if (kind == "evolve1d") return evolve1d_job(cfg);
  if (kind == "reduce3d") return reduce3d_job(cfg, jobs);
  if (kind == "count") return count_job(cfg);
  if (kind == "validate") return validate_job(cfg);
  throw ConfigError(cfg.origin() + ": unknown scenario kind '" + kind + "'");
}

struct Expectation {
  std::string key;
  std::string relation;
  double limit;
};

std::vector<Expectation> read_expectations(const Config& cfg) {
  std::vector<Expectation> out;
  for (const auto& k : cfg.keys("expect_below")) out.push_back({"expect_below." + k, "<=", cfg.real("expect_below." + k)});
  for (const auto& k : cfg.keys("expect_above")) out.push_back({"expect_above." + k, ">=", cfg.real("expect_above." + k)});
  for (const auto& k : cfg.keys("expect")) out.push_back({"expect." + k, "==", cfg.flag("expect." + k, false) ? 1.0 : 0.0});
  return out;
}

}  // namespace

const std::vector<std::string>& scenario_kinds() {
  static const std::vector<std::string> k = {"scatter", "trap", "evolve1d", "reduce3d", "count", "validate"};
  return k;
}

bool RunResult::passed() const {
  for (const auto& a : assertions)
    if (!a.pass) return false;
  return true;
}

fs::path output_root(const std::optional<fs::path>& explicit_root) {
  if (explicit_root) return *explicit_root;
  if (const char* env = std::getenv("GPR_OUTPUT_ROOT"); env && *env) return env;
  return "gpr-output";
}

std::string scenario_name(const Config& cfg, const std::string& kind) {
  if (cfg.has("run.name")) return cfg.str("run.name");
  const fs::path p(cfg.origin());
  if (p.has_extension()) return p.stem().string();
  return kind;
}

Json reproducibility(const Config& cfg) {
  Json seed = nullptr;
  for (const auto& s : cfg.sections())
    if (const auto v = cfg.peek(s + ".seed")) seed = *v;
  return {{"config_hash", hex(cfg.hash())},
          {"seed", seed},
          {"versions",
           {{"gpr", GPR_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"compiler", __VERSION__}}}};
}

RunResult run_scenario(const Config& cfg, const RunContext& ctx, std::string kind) {
  if (cfg.has("run.kind")) {
    const std::string declared = cfg.str("run.kind");
    if (!kind.empty() && declared != kind)
      cfg.fail("run.kind", "config declares '" + declared + "' but was run as '" + kind + "'");
    kind = declared;
  }
  if (kind.empty()) throw ConfigError(cfg.origin() + ": no scenario kind; set [run] kind");
  RunResult res;
  res.kind = kind;
  res.name = scenario_name(cfg, kind);
  validate_parameters(cfg);
  const Job job = make_job(cfg, kind, std::max(1, ctx.jobs));
  const auto expectations = read_expectations(cfg);
  cfg.check_all_used();

  fs::create_directories(ctx.output_dir);
  Outcome out;
  try {
    out = job(ctx.output_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw Error(res.name + " (" + kind + "): " + e.what());
  }
  res.metrics = out.metrics;

  for (const auto& e : expectations) {
    const std::string metric = e.key.substr(e.key.find('.') + 1);
    const auto it = out.metrics.find(metric);
    if (it == out.metrics.end()) {
      std::string known;
      for (const auto& [m, _] : out.metrics) known += (known.empty() ? "" : ", ") + m;
      cfg.fail(e.key, "no metric '" + metric + "' in a " + kind + " run (available: " + known + ")");
    }
    const double v = it->second;
    const bool pass = e.relation == "<=" ? v <= e.limit : e.relation == ">=" ? v >= e.limit : v == e.limit;
    res.assertions.push_back({metric, e.relation, e.limit, v, pass});
  }

  Json assertions = Json::array();
  for (const auto& a : res.assertions)
    assertions.push_back({{"metric", a.metric}, {"relation", a.relation}, {"limit", a.limit}, {"value", a.value},
                          {"pass", a.pass}});
  Json metrics = Json::object();
  for (const auto& [k, v] : out.metrics) metrics[k] = v;
  res.summary = {{"scenario", res.name},
                 {"kind", kind},
                 {"passed", res.passed()},
                 {"assertions", assertions},
                 {"metrics", metrics},
                 {"results", out.results},
                 {"files", out.files},
                 {"reproducibility", reproducibility(cfg)}};
  std::ofstream os(ctx.output_dir / "summary.json");
  os << res.summary.dump(2) << '\n';
  if (!os) throw Error("cannot write " + (ctx.output_dir / "summary.json").string());
  return res;
}

}  // namespace gpr::harness
