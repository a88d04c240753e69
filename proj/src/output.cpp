#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gpr/harness.hpp"

namespace gpr::harness {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i, v >>= 8) r = (r << 8) | (v & 0xff);
  return r;
}

void put_f64(std::ostream& os, double x) {
  const std::uint64_t b = to_little(std::bit_cast<std::uint64_t>(x));
  os.write(reinterpret_cast<const char*>(&b), 8);
}

double get_f64(std::istream& is) {
  std::uint64_t b = 0;
  is.read(reinterpret_cast<char*>(&b), 8);
  return std::bit_cast<double>(to_little(b));
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_snapshot(const std::filesystem::path& path, const Snapshot& s) {
  if (s.dims.empty() || s.dims.size() != s.spacings.size())
    throw InterfaceError("write_snapshot: dims and spacings must have the same positive length");
  long total = 1;
  for (long d : s.dims) total *= d;
  if (total != static_cast<long>(s.data.size())) throw InterfaceError("write_snapshot: data size does not match dims");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_snapshot: cannot open " + path.string());
  os << "GPR1 " << s.dims.size();
  for (long d : s.dims) os << ' ' << d;
  for (double h : s.spacings) os << ' ' << format_number(h);
  os << ' ' << format_number(s.time) << '\n';
  for (const auto& z : s.data) {
    put_f64(os, z.real());
    put_f64(os, z.imag());
  }
  if (!os) throw Error("write_snapshot: write failed for " + path.string());
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_snapshot: cannot open " + path.string());
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic;
  std::size_t nd = 0;
  hs >> magic >> nd;
  if (magic != "GPR1" || nd == 0 || nd > 8) throw InterfaceError("read_snapshot: bad header in " + path.string());
  Snapshot s;
  s.dims.resize(nd);
  s.spacings.resize(nd);
  long total = 1;
  for (auto& d : s.dims) {
    hs >> d;
    total *= d;
  }
  for (auto& h : s.spacings) hs >> h;
  hs >> s.time;
  if (!hs || total <= 0) throw InterfaceError("read_snapshot: bad header in " + path.string());
  s.data.resize(static_cast<std::size_t>(total));
  for (auto& z : s.data) {
    const double re = get_f64(is);
    const double im = get_f64(is);
    z = {re, im};
  }
  if (!is) throw InterfaceError("read_snapshot: truncated payload in " + path.string());
  return s;
}

void CsvTable::row(const std::vector<double>& values) {
  if (values.size() != header_.size()) throw InterfaceError("CsvTable: row width differs from the header");
  rows_.push_back(values);
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error("CsvTable: cannot open " + path.string());
  for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
  os << '\n';
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_number(r[i]);
    os << '\n';
  }
  if (!os) throw Error("CsvTable: write failed for " + path.string());
}

}  // namespace gpr::harness
