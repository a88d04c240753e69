#ifndef GPR_HARNESS_HPP
#define GPR_HARNESS_HPP

#include <boost/property_tree/ptree.hpp>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gpr/errors.hpp"

namespace gpr::harness {

using Json = nlohmann::ordered_json;

/// Sectioned key = value configuration. Every key remembers the line it came from so that
/// type and range errors point back into the file.
class Config {
 public:
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text, const std::string& origin = "<string>");

  /// Command-line override; `key` is "section.name".
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key) const;
  double real(const std::string& key, double fallback) const;
  long integer(const std::string& key) const;
  long integer(const std::string& key, long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> reals(const std::string& key) const;

  /// Keys of one section in file order.
  std::vector<std::string> keys(const std::string& section) const;
  bool has_section(const std::string& section) const;
  std::vector<std::string> sections() const;
  /// Value without marking the key as read.
  std::optional<std::string> peek(const std::string& key) const;

  /// "origin:line" for a key, or the origin alone for overrides and missing keys.
  std::string where(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

  /// Rejects keys no runner has read, naming the first one.
  void check_all_used() const;

  /// "section.key=value" lines in sorted order; whitespace and comments do not contribute.
  std::string canonical() const;
  std::uint64_t hash() const;
  const std::string& origin() const { return origin_; }

 private:
  std::string raw(const std::string& key) const;

  boost::property_tree::ptree tree_;
  std::map<std::string, int> lines_;
  std::map<std::string, std::vector<std::string>> order_;
  std::string origin_;
  mutable std::set<std::string> used_;
};

std::uint64_t fnv1a(const std::string& bytes);
std::string hex(std::uint64_t v);

/// Range checks on the physical parameters wherever they appear:
/// 0 < xi < 1/2, 1/3 < beta_tilde < 1, 0 < delta < 2/5, and mu = epsilon²/N when all three are given.
void validate_parameters(const Config& cfg);

struct AdmissibilityRow {
  double N = 0;
  double epsilon = 0;
  double value = 0;  ///< N·ε^δ = ε^{2+δ}/μ
};

struct AdmissibilityReport {
  double delta = 0;
  std::vector<AdmissibilityRow> rows;
  bool tail_decreasing = false;  ///< N·ε^δ strictly decreasing over the second half of the sequence
  bool admissible = false;
  double window_upper = 0;  ///< 2/(2+δ)
  std::optional<bool> window_ok;  ///< 5/6 < d < β̃ < 2/(2+δ) for the supplied (d, β̃)
};

/// `sequence` holds (N, ε) pairs, N strictly increasing and ε strictly decreasing.
AdmissibilityReport validate_admissibility(const std::vector<std::pair<double, double>>& sequence, double delta,
                                           std::optional<std::pair<double, double>> d_beta = std::nullopt);

/// Snapshot: "GPR1 <ndims> <dims...> <spacings...> <time>\n" then little-endian f64 re/im pairs,
/// first dimension fastest.
struct Snapshot {
  std::vector<long> dims;
  std::vector<double> spacings;
  double time = 0;
  std::vector<std::complex<double>> data;
};

void write_snapshot(const std::filesystem::path& path, const Snapshot& s);
Snapshot read_snapshot(const std::filesystem::path& path);

/// Comma-separated table with a unit-carrying header; numbers use round-trip precision.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void row(const std::vector<double>& values);
  void write(const std::filesystem::path& path) const;
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

std::string format_number(double v);

struct Assertion {
  std::string metric;
  std::string relation;  ///< "<=", ">=" or "=="
  double limit = 0;
  double value = 0;
  bool pass = false;
};

struct RunContext {
  std::filesystem::path output_dir;
  int jobs = 1;
};

struct RunResult {
  std::string name;
  std::string kind;
  std::map<std::string, double> metrics;
  std::vector<Assertion> assertions;
  Json summary;
  bool passed() const;
};

const std::vector<std::string>& scenario_kinds();

/// Output root: explicit value, else $GPR_OUTPUT_ROOT, else "gpr-output".
std::filesystem::path output_root(const std::optional<std::filesystem::path>& explicit_root);

/// Scenario name: [run] name, else the config file stem, else the kind.
std::string scenario_name(const Config& cfg, const std::string& kind);

/// Validate, dispatch on `kind` (or [run] kind), write artifacts under ctx.output_dir and
/// evaluate the [expect], [expect_below] and [expect_above] sections.
RunResult run_scenario(const Config& cfg, const RunContext& ctx, std::string kind = "");

Json reproducibility(const Config& cfg);

}  // namespace gpr::harness

#endif  // GPR_HARNESS_HPP
