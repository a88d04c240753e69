// Command-line front end: one subcommand per scenario kind plus `run` for config batches.
#include <CLI11.hpp>
#include <chrono>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gpr/harness.hpp"

namespace fs = std::filesystem;
using namespace gpr::harness;

namespace {

struct Invocation {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;  // filled from typed options
};

Config build_config(const Invocation& inv) {
  Config cfg = inv.config.empty() ? Config::parse("", "command line") : Config::load(inv.config);
  for (const auto& [k, v] : inv.flags) cfg.set(k, v);
  for (const auto& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw gpr::ConfigError("--set '" + s + "': expected section.key=value");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

struct Outcome {
  int status = 0;
  std::string text;
};

std::string report(const RunResult& r, const fs::path& dir, double seconds) {
  std::ostringstream os;
  os << (r.passed() ? "PASS " : "FAIL ") << r.name << " (" << r.kind << ")  " << dir.string() << "  [" << seconds
     << " s]\n";
  for (const auto& a : r.assertions)
    os << "  " << (a.pass ? "ok   " : "FAIL ") << a.metric << " = " << a.value << "  " << a.relation << ' ' << a.limit
       << '\n';
  return os.str();
}

Outcome run_one(const Config& cfg, const std::string& kind, const fs::path& root, int jobs) {
  const auto start = std::chrono::steady_clock::now();
  const std::string k = kind.empty() ? cfg.peek("run.kind").value_or("") : kind;
  const fs::path dir = root / scenario_name(cfg, k);
  const RunResult r = run_scenario(cfg, {dir, jobs}, kind);
  return {r.passed() ? 0 : 1,
          report(r, dir, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reproducible scenarios for the confined Bose gas model"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::string> output;
  int jobs = 1;
  app.add_option("-o,--output", output, "output root (default: $GPR_OUTPUT_ROOT or ./gpr-output)");
  app.add_option("-j,--jobs", jobs, "independent scenarios (run) or sweep points (reduce3d) in parallel")
      ->check(CLI::PositiveNumber);

  std::map<std::string, Invocation> inv;
  std::string chosen;
  for (const auto& kind : scenario_kinds()) {
    auto* sub = app.add_subcommand(kind, "run a " + kind + " scenario");
    sub->add_option("config", inv[kind].config, "scenario file (INI)")->check(CLI::ExistingFile);
    sub->add_option("--set", inv[kind].sets, "override section.key=value")->take_all();
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  // Typed shortcuts for the scattering solver.
  auto* sc = app.get_subcommand("scatter");
  std::map<std::string, std::string> scatter_flags;
  auto shortcut = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option(flag, scatter_flags[key], help);
  };
  shortcut(sc, "--potential", "interaction.potential", "square, bump, table or zero");
  shortcut(sc, "--V0", "interaction.V0", "interaction height");
  shortcut(sc, "--range", "interaction.range", "interaction range (<= 1)");
  shortcut(sc, "--samples", "interaction.samples", "comma-separated samples for a tabulated profile");
  shortcut(sc, "--mu", "scatter.mu", "comma-separated list of mu");
  shortcut(sc, "--N", "scatter.N", "particle number (with --epsilon, mu = epsilon^2/N)");
  shortcut(sc, "--epsilon", "scatter.epsilon", "confinement scale");
  shortcut(sc, "--beta-tilde", "scatter.beta_tilde", "correction exponent in (1/3, 1)");
  shortcut(sc, "--ode-tolerance", "scatter.ode_tolerance", "Richardson tolerance on the scaled ODE state");
  shortcut(sc, "--bisection-tolerance", "scatter.bisection_tolerance", "relative tolerance for R");
  shortcut(sc, "--radial-points", "scatter.radial_points", "rows of the radial tables (r, f, g, w, U)");

  auto* va = app.get_subcommand("validate");
  std::map<std::string, std::string> validate_flags;
  auto vflag = [&](const std::string& flag, const std::string& key, const std::string& help) {
    va->add_option(flag, validate_flags[key], help);
  };
  vflag("--delta", "validate.delta", "admissibility exponent in (0, 2/5)");
  vflag("--N", "validate.N", "comma-separated particle numbers");
  vflag("--epsilon", "validate.epsilon", "comma-separated epsilons");
  vflag("--sequence", "validate.sequence", "power or geometric");
  vflag("--count", "validate.count", "number of terms for a generated sequence");
  vflag("--exponent", "validate.exponent", "epsilon_n = n^-exponent");
  vflag("--base", "validate.base", "epsilon_n = base^-n");
  vflag("--d", "validate.d", "exponent d of the parameter window");
  vflag("--beta-tilde", "validate.beta_tilde", "exponent beta_tilde of the parameter window");

  std::vector<std::string> batch;
  auto* run = app.add_subcommand("run", "run scenario files; kinds come from their [run] sections");
  run->add_option("configs", batch, "scenario files")->required()->check(CLI::ExistingFile);
  run->callback([&chosen] { chosen = "run"; });

  CLI11_PARSE(app, argc, argv);
  for (const auto& [k, v] : scatter_flags)
    if (!v.empty()) inv["scatter"].flags.emplace_back(k, v);
  for (const auto& [k, v] : validate_flags)
    if (!v.empty()) inv["validate"].flags.emplace_back(k, v);

  const fs::path root = output_root(output ? std::optional<fs::path>(*output) : std::nullopt);
  try {
    if (chosen != "run") {
      const Outcome o = run_one(build_config(inv[chosen]), chosen, root, jobs);
      std::cout << o.text;
      return o.status;
    }

    // Configs are parsed up front so that a typo fails before any scenario starts.
    std::vector<Config> cfgs;
    std::vector<fs::path> dirs;
    for (const auto& path : batch) {
      cfgs.push_back(Config::load(path));
      const std::string name = scenario_name(cfgs.back(), cfgs.back().peek("run.kind").value_or(""));
      for (const auto& d : dirs)
        if (d == root / name) throw gpr::ConfigError(path + ": scenario name '" + name + "' is used twice");
      dirs.push_back(root / name);
    }
    int status = 0;
    for (std::size_t begin = 0; begin < cfgs.size(); begin += static_cast<std::size_t>(jobs)) {
      const std::size_t end = std::min(cfgs.size(), begin + static_cast<std::size_t>(jobs));
      std::vector<std::future<Outcome>> pending;
      for (std::size_t i = begin; i < end; ++i)
        pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                     [&, i] { return run_one(cfgs[i], "", root, 1); }));
      for (auto& p : pending) {
        const Outcome o = p.get();
        std::cout << o.text << std::flush;
        status = std::max(status, o.status);
      }
    }
    return status;
  } catch (const gpr::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
