#include <cmath>

#include "gpr/harness.hpp"

namespace gpr::harness {

AdmissibilityReport validate_admissibility(const std::vector<std::pair<double, double>>& sequence, double delta,
                                           std::optional<std::pair<double, double>> d_beta) {
  if (sequence.empty()) throw DomainError("validate_admissibility: empty sequence");
  if (!(delta > 0 && delta < 0.4))
    throw DomainError("validate_admissibility: delta = " + num(delta) + " lies outside 0 < delta < 2/5");
  AdmissibilityReport rep;
  rep.delta = delta;
  rep.window_upper = 2 / (2 + delta);
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const auto [N, eps] = sequence[i];
    if (!(N > 0) || !(eps > 0)) throw DomainError("validate_admissibility: N and epsilon must be positive");
    if (i > 0 && !(N > sequence[i - 1].first))
      throw DomainError("validate_admissibility: N must increase strictly along the sequence");
    if (i > 0 && !(eps < sequence[i - 1].second))
      throw DomainError("validate_admissibility: epsilon must decrease strictly along the sequence");
    rep.rows.push_back({N, eps, N * std::pow(eps, delta)});
  }
  // A finite sequence cannot show a limit; the verdict is whether the tail still falls.
  const std::size_t n = rep.rows.size();
  const std::size_t start = n / 2;
  rep.tail_decreasing = n >= 2;
  for (std::size_t i = std::max<std::size_t>(start, 1); i < n; ++i)
    if (!(rep.rows[i].value < rep.rows[i - 1].value)) rep.tail_decreasing = false;
  rep.admissible = rep.tail_decreasing;
  if (d_beta) {
    const auto [d, bt] = *d_beta;
    rep.window_ok = 5.0 / 6 < d && d < bt && bt < rep.window_upper;
  }
  return rep;
}

}  // namespace gpr::harness
