#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gpr/harness.hpp"

namespace gpr::harness {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

pt::ptree::path_type path_of(const std::string& key) { return pt::ptree::path_type(key, '.'); }

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

}  // namespace

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  // '#' comments are blanked so that the ini reader keeps its line count.
  std::istringstream lines(text);
  std::ostringstream cleaned;
  std::string line, section;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') {
      cleaned << '\n';
      continue;
    }
    cleaned << line << '\n';
    const auto at = [&](const std::string& msg) { return ConfigError(origin + ":" + std::to_string(number) + ": " + msg); };
    if (t.front() == '[') {
      if (t.back() != ']') throw at("unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty() || section.find('.') != std::string::npos) throw at("invalid section name '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw at("expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (section.empty()) throw at("key '" + key + "' appears before any [section]");
    if (key.empty() || key.find('.') != std::string::npos) throw at("invalid key '" + key + "'");
    const std::string full = section + "." + key;
    if (c.lines_.count(full)) throw at("duplicate key '" + full + "'");
    c.lines_[full] = number;
    c.order_[section].push_back(key);
  }
  std::istringstream in(cleaned.str());
  try {
    pt::ini_parser::read_ini(in, c.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() || key.find('.', dot + 1) != std::string::npos)
    throw ConfigError("override '" + key + "': expected section.key");
  const std::string section = key.substr(0, dot), name = key.substr(dot + 1);
  if (!lines_.count(key)) order_[section].push_back(name);
  lines_[key] = 0;
  tree_.put(path_of(key), trim(value));
}

bool Config::has(const std::string& key) const { return tree_.get_optional<std::string>(path_of(key)).has_value(); }

std::optional<std::string> Config::peek(const std::string& key) const {
  const auto v = tree_.get_optional<std::string>(path_of(key));
  if (!v) return std::nullopt;
  return *v;
}

std::string Config::raw(const std::string& key) const {
  used_.insert(key);
  const auto v = tree_.get_optional<std::string>(path_of(key));
  if (!v) fail(key, "missing required key");
  return trim(*v);
}

std::string Config::str(const std::string& key) const { return raw(key); }
std::string Config::str(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

double Config::real(const std::string& key) const {
  const std::string v = raw(key);
  double out = 0;
  if (!parse_number(v, out) || std::isnan(out)) fail(key, "expected a number, got '" + v + "'");
  return out;
}
double Config::real(const std::string& key, double fallback) const { return has(key) ? real(key) : fallback; }

long Config::integer(const std::string& key) const {
  const std::string v = raw(key);
  long out = 0;
  if (!parse_number(v, out)) fail(key, "expected an integer, got '" + v + "'");
  return out;
}
long Config::integer(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }

bool Config::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  fail(key, "expected true or false, got '" + v + "'");
}

std::vector<double> Config::reals(const std::string& key) const {
  const std::string v = raw(key);
  std::vector<double> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double x = 0;
    if (!parse_number(item, x) || std::isnan(x)) fail(key, "expected a comma-separated list of numbers, got '" + v + "'");
    out.push_back(x);
  }
  if (out.empty()) fail(key, "empty list");
  return out;
}

std::vector<std::string> Config::keys(const std::string& section) const {
  const auto it = order_.find(section);
  return it == order_.end() ? std::vector<std::string>{} : it->second;
}

bool Config::has_section(const std::string& section) const { return order_.count(section) > 0; }

std::vector<std::string> Config::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : order_) out.push_back(name);
  return out;
}

std::string Config::where(const std::string& key) const {
  const auto it = lines_.find(key);
  if (it == lines_.end()) return origin_;
  if (it->second == 0) return "command line";
  return origin_ + ":" + std::to_string(it->second);
}

void Config::fail(const std::string& key, const std::string& message) const {
  throw ConfigError(where(key) + ": " + key + ": " + message);
}

void Config::check_all_used() const {
  // Report in file order so the first offending line comes first.
  std::vector<std::pair<int, std::string>> unused;
  for (const auto& [key, line] : lines_)
    if (!used_.count(key)) unused.emplace_back(line, key);
  if (unused.empty()) return;
  std::sort(unused.begin(), unused.end());
  fail(unused.front().second, "unknown key for this scenario");
}

std::string Config::canonical() const {
  std::map<std::string, std::string> flat;
  for (const auto& [section, node] : tree_)
    for (const auto& [key, value] : node) flat[section + "." + key] = trim(value.data());
  std::string out;
  for (const auto& [k, v] : flat) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t Config::hash() const { return fnv1a(canonical()); }

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

void validate_parameters(const Config& cfg) {
  auto value = [&](const std::string& key) -> std::optional<double> {
    const auto v = cfg.peek(key);
    if (!v) return std::nullopt;
    double x = 0;
    if (!parse_number(*v, x)) cfg.fail(key, "expected a number, got '" + *v + "'");
    return x;
  };
  for (const auto& section : cfg.sections()) {
    const std::string s = section + ".";
    if (const auto xi = value(s + "xi"); xi && !(*xi > 0 && *xi < 0.5))
      cfg.fail(s + "xi", "xi = " + num(*xi) + " lies outside the counting-weight window 0 < xi < 1/2");
    if (const auto bt = value(s + "beta_tilde"); bt && !(*bt > 1.0 / 3 && *bt < 1))
      cfg.fail(s + "beta_tilde",
               "beta_tilde = " + num(*bt) + " lies outside the correction-radius window 1/3 < beta_tilde < 1");
    if (const auto d = value(s + "delta"); d && !(*d > 0 && *d < 0.4))
      cfg.fail(s + "delta", "delta = " + num(*d) + " lies outside the admissibility window 0 < delta < 2/5");
    if (cfg.peek(s + "mu") && cfg.peek(s + "N") && cfg.peek(s + "epsilon")) {
      const auto m = value(s + "mu"), N = value(s + "N"), eps = value(s + "epsilon");
      const double expect = *eps * *eps / *N;
      if (!(std::abs(*m - expect) <= 1e-12 * std::abs(expect)))
        cfg.fail(s + "mu", "mu = " + num(*m) + " is inconsistent with epsilon^2/N = " + num(expect));
    }
  }
}

}  // namespace gpr::harness
