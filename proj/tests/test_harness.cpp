#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gpr/harness.hpp"

using namespace gpr;
using namespace gpr::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gpr_harness_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

const char* small_count = R"(
[run]
kind = count
[count]
N = 2
nx = 4
x_length = 8
y_n = 4
y_extent = 4
xi = 0.2
seed = 7
samples = 3
[longitudinal]
harmonic = 0.25
[expect_below]
trace_failures = 0
)";

}  // namespace

TEST_CASE("config values, lists and flags") {
  const auto cfg = Config::parse(R"(
# comment
[a]
x = 1.5
n = 12
list = 1e-3, 2e-3 ,3
on = yes
name =  square
; another comment
[b]
y = -2
)",
                                 "demo.ini");
  CHECK(cfg.real("a.x") == 1.5);
  CHECK(cfg.integer("a.n") == 12);
  CHECK(cfg.reals("a.list") == std::vector<double>{1e-3, 2e-3, 3});
  CHECK(cfg.flag("a.on", false));
  CHECK(cfg.str("a.name") == "square");
  CHECK(cfg.real("b.y") == -2);
  CHECK(cfg.real("b.missing", 4.0) == 4.0);
  CHECK(cfg.keys("a") == std::vector<std::string>{"x", "n", "list", "on", "name"});
  CHECK(cfg.where("a.list") == "demo.ini:6");
}

TEST_CASE("config diagnostics carry line numbers") {
  const auto cfg = Config::parse("[s]\nn = 3\nx = abc\nk = 2.5\n", "f.ini");
  CHECK(error_of([&] { cfg.real("s.x"); }).find("f.ini:3") != std::string::npos);
  CHECK(error_of([&] { cfg.integer("s.k"); }).find("f.ini:4") != std::string::npos);
  CHECK_THROWS_AS(cfg.real("s.none"), ConfigError);

  CHECK(error_of([] { Config::parse("[s]\nx = 1\nbroken line\n", "g.ini"); }).find("g.ini:3") != std::string::npos);
  CHECK(error_of([] { Config::parse("x = 1\n", "g.ini"); }).find("g.ini:1") != std::string::npos);
  CHECK(error_of([] { Config::parse("[s]\nx = 1\n\nx = 2\n", "g.ini"); }).find("g.ini:4") != std::string::npos);

  const auto used = Config::parse("[s]\na = 1\ntypo = 2\n", "h.ini");
  used.real("s.a");
  const auto msg = error_of([&] { used.check_all_used(); });
  CHECK(msg.find("h.ini:3") != std::string::npos);
  CHECK(msg.find("s.typo") != std::string::npos);
}

TEST_CASE("overrides and canonical hash") {
  auto a = Config::parse("[s]\nx = 1\ny = 2\n", "a.ini");
  const auto b = Config::parse("# header\n[s]\n  y=2\n\nx   =   1\n", "b.ini");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  a.set("s.x", "3");
  CHECK(a.real("s.x") == 3);
  CHECK(a.where("s.x") == "command line");
  CHECK(a.hash() != b.hash());
  CHECK_THROWS_AS(a.set("noseparator", "1"), ConfigError);

  // Published FNV-1a 64-bit test vectors.
  CHECK(hex(fnv1a("")) == "cbf29ce484222325");
  CHECK(hex(fnv1a("a")) == "af63dc4c8601ec8c");
  CHECK(hex(fnv1a("foobar")) == "85944171f73967e8");
}

TEST_CASE("parameter windows") {
  CHECK_NOTHROW(validate_parameters(Config::parse("[c]\nxi = 0.2\nbeta_tilde = 0.9\ndelta = 0.3\n")));
  const auto xi = error_of([] { validate_parameters(Config::parse("[c]\nN = 2\nxi = 0.7\n", "x.ini")); });
  CHECK(xi.find("x.ini:3") != std::string::npos);
  CHECK(xi.find("counting-weight window") != std::string::npos);
  CHECK_THROWS_AS(validate_parameters(Config::parse("[c]\nxi = 0\n")), ConfigError);
  CHECK_THROWS_AS(validate_parameters(Config::parse("[c]\nbeta_tilde = 0.3\n")), ConfigError);
  CHECK_THROWS_AS(validate_parameters(Config::parse("[c]\nbeta_tilde = 1\n")), ConfigError);
  CHECK_THROWS_AS(validate_parameters(Config::parse("[c]\ndelta = 0.5\n")), ConfigError);
  CHECK_THROWS_AS(validate_parameters(Config::parse("[c]\ndelta = 0.4\n")), ConfigError);

  CHECK_NOTHROW(validate_parameters(Config::parse("[c]\nN = 100\nepsilon = 0.1\nmu = 1e-4\n")));
  CHECK_THROWS_AS(validate_parameters(Config::parse("[c]\nN = 100\nepsilon = 0.1\nmu = 2e-4\n")), ConfigError);
  // A sweep list next to a scalar N is not a consistency claim.
  CHECK_NOTHROW(validate_parameters(Config::parse("[c]\nN = 100\nepsilon = 0.4, 0.2\n")));
}

TEST_CASE("admissibility of (N, epsilon) sequences") {
  std::vector<std::pair<double, double>> power, geometric;
  for (int n = 1; n <= 30; ++n) {
    power.emplace_back(n, std::pow(n, -3.0));
    geometric.emplace_back(n, std::pow(2.0, -n));
  }
  const auto p = validate_admissibility(power, 0.3);
  CHECK_FALSE(p.admissible);
  for (const auto& r : p.rows) CHECK(r.value == doctest::Approx(std::pow(r.N, 0.1)).epsilon(1e-12));

  const auto g = validate_admissibility(geometric, 0.3);
  CHECK(g.admissible);
  for (const auto& r : g.rows) CHECK(r.value == doctest::Approx(r.N * std::pow(2.0, -0.3 * r.N)).epsilon(1e-12));
  CHECK(g.window_upper == doctest::Approx(2 / 2.3));

  CHECK_THROWS_AS(validate_admissibility(geometric, 0.5), DomainError);
  CHECK_THROWS_AS(validate_admissibility({}, 0.3), DomainError);
  CHECK_THROWS_AS(validate_admissibility({{2, 0.1}, {1, 0.05}}, 0.3), DomainError);
  CHECK_THROWS_AS(validate_admissibility({{1, 0.1}, {2, 0.2}}, 0.3), DomainError);

  CHECK(*validate_admissibility(geometric, 0.3, std::make_pair(0.84, 0.86)).window_ok);
  CHECK_FALSE(*validate_admissibility(geometric, 0.3, std::make_pair(0.80, 0.86)).window_ok);
  CHECK_FALSE(*validate_admissibility(geometric, 0.3, std::make_pair(0.84, 0.88)).window_ok);
  CHECK_FALSE(*validate_admissibility(geometric, 0.3, std::make_pair(0.86, 0.85)).window_ok);
}

TEST_CASE("snapshot format") {
  const fs::path dir = scratch("snapshot");
  fs::create_directories(dir);
  Snapshot s{{3}, {0.5}, 0.25, {{1.0, 0.0}, {0.0, -2.0}, {3.5, 4.25}}};
  write_snapshot(dir / "a.gpr", s);
  const std::string bytes = slurp(dir / "a.gpr");
  const std::string header = "GPR1 1 3 0.5 0.25\n";
  REQUIRE(bytes.size() == header.size() + 3 * 16);
  CHECK(bytes.substr(0, header.size()) == header);
  // 1.0 as little-endian IEEE 754.
  const unsigned char one[8] = {0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
  CHECK(std::memcmp(bytes.data() + header.size(), one, 8) == 0);
  const auto back = read_snapshot(dir / "a.gpr");
  CHECK(back.dims == s.dims);
  CHECK(back.spacings == s.spacings);
  CHECK(back.time == s.time);
  CHECK(back.data == s.data);

  Snapshot cube{{2, 2, 2}, {0.1, 0.2, 0.2}, 1.0, std::vector<std::complex<double>>(8, {0.5, 0.5})};
  write_snapshot(dir / "c.gpr", cube);
  CHECK(slurp(dir / "c.gpr").rfind("GPR1 3 2 2 2 0.10000000000000001 0.20000000000000001 0.20000000000000001 1\n", 0) == 0);
  CHECK(read_snapshot(dir / "c.gpr").data == cube.data);

  CHECK_THROWS_AS(write_snapshot(dir / "bad.gpr", Snapshot{{4}, {0.1}, 0, {{1, 0}}}), InterfaceError);
}

TEST_CASE("csv tables round-trip") {
  const fs::path dir = scratch("csv");
  fs::create_directories(dir);
  CsvTable t({"t [time]", "norm [1]"});
  t.row({0.1, 1.0 / 3});
  CHECK_THROWS_AS(t.row({1.0}), InterfaceError);
  t.write(dir / "t.csv");
  std::istringstream in(slurp(dir / "t.csv"));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "t [time],norm [1]");
  CHECK(std::stod(row.substr(row.find(',') + 1)) == 1.0 / 3);
}

TEST_CASE("scenario runs") {
  SUBCASE("summary, hash and artifacts") {
    const auto cfg = Config::parse("[run]\nkind = validate\n[validate]\ndelta = 0.3\nsequence = geometric\nbase = 2\n"
                                   "count = 20\n[expect]\nadmissible = true\n",
                                   "geo.ini");
    const fs::path dir = scratch("validate");
    const auto r = run_scenario(cfg, {dir, 1});
    CHECK(r.passed());
    CHECK(r.name == "geo");
    const auto j = Json::parse(slurp(dir / "summary.json"));
    CHECK(j["reproducibility"]["config_hash"] == hex(cfg.hash()));
    CHECK(j["passed"] == true);
    CHECK(fs::exists(dir / "admissibility.csv"));
  }

  SUBCASE("identical config and seed give identical bytes") {
    const auto cfg = Config::parse(small_count, "small.ini");
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    CHECK(run_scenario(cfg, {a, 1}).passed());
    CHECK(run_scenario(Config::parse(small_count, "small.ini"), {b, 1}).passed());
    CHECK(slurp(a / "count.csv") == slurp(b / "count.csv"));
    CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));

    auto other = Config::parse(small_count, "small.ini");
    other.set("count.seed", "8");
    const fs::path c = scratch("det_c");
    run_scenario(other, {c, 1});
    CHECK(slurp(a / "count.csv") != slurp(c / "count.csv"));
  }

  SUBCASE("evolution snapshots are reproducible") {
    const std::string text = "[run]\nkind = evolve1d\n[evolve1d]\nn = 32\nlength = 12\nT = 0.1\ndt = 0.01\nb = 1\n"
                             "snapshot_stride = 5\n[longitudinal]\nharmonic = 0.5\n";
    const fs::path a = scratch("evo_a"), b = scratch("evo_b");
    run_scenario(Config::parse(text, "e.ini"), {a, 1});
    run_scenario(Config::parse(text, "e.ini"), {b, 1});
    CHECK(slurp(a / "series.csv") == slurp(b / "series.csv"));
    const auto snap = read_snapshot(a / "snapshots" / "phi_0002.gpr");
    CHECK(snap.dims == std::vector<long>{32});
    CHECK(snap.time == doctest::Approx(0.1));
    CHECK(slurp(a / "snapshots" / "phi_0002.gpr") == slurp(b / "snapshots" / "phi_0002.gpr"));
  }

  SUBCASE("invalid xi is rejected before running") {
    auto cfg = Config::parse(small_count, "small.ini");
    cfg.set("count.xi", "0.7");
    const fs::path dir = scratch("badxi");
    const auto msg = error_of([&] { run_scenario(cfg, {dir, 1}); });
    CHECK(msg.find("counting-weight window") != std::string::npos);
    CHECK_FALSE(fs::exists(dir));
  }

  SUBCASE("unknown keys, metrics and kinds") {
    CHECK_THROWS_AS(run_scenario(Config::parse(std::string(small_count) + "[profile]\nwidht = 2\n", "t.ini"),
                                 {scratch("typo"), 1}),
                    ConfigError);
    const auto metric = Config::parse("[run]\nkind = validate\n[validate]\ndelta = 0.3\nN = 1, 2\nepsilon = 0.5, 0.1\n"
                                      "[expect_below]\nnot_a_metric = 1\n",
                                      "m.ini");
    CHECK(error_of([&] { run_scenario(metric, {scratch("metric"), 1}); }).find("m.ini:8") != std::string::npos);
    CHECK_THROWS_AS(run_scenario(metric, {scratch("kind"), 1}, "trap"), ConfigError);
    CHECK_THROWS_AS(run_scenario(Config::parse("[x]\ny = 1\n"), {scratch("nokind"), 1}), ConfigError);
  }

  SUBCASE("failed expectations are reported, not thrown") {
    const auto cfg = Config::parse("[run]\nkind = validate\n[validate]\ndelta = 0.3\nsequence = power\nexponent = 3\n"
                                   "count = 10\n[expect]\nadmissible = true\n",
                                   "p.ini");
    const auto r = run_scenario(cfg, {scratch("fail"), 1});
    CHECK_FALSE(r.passed());
    REQUIRE(r.assertions.size() == 1);
    CHECK(r.assertions[0].value == 0);
  }
}

TEST_CASE("output root resolution") {
  ::setenv("GPR_OUTPUT_ROOT", "/tmp/from-env", 1);
  CHECK(output_root(std::nullopt) == fs::path("/tmp/from-env"));
  CHECK(output_root(fs::path("explicit")) == fs::path("explicit"));
  ::unsetenv("GPR_OUTPUT_ROOT");
  CHECK(output_root(std::nullopt) == fs::path("gpr-output"));
}
