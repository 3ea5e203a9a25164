#include "schedule.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace vflow::schedule {

void validate(const StageLayout& layout) {
  if (layout.l1 <= 0 || layout.l2 <= 0 || layout.l3 <= 0) {
    fail(ErrorKind::config, "stage layout: every stage needs at least one layer");
  }
}

void validate(const StrategyBounds& b) {
  const bool ok = 0.0 < b.r1_min && b.r1_min <= b.r1_max && b.r1_max <= 1.0 &&
                  0.0 < b.r2_min && b.r2_min <= b.r2_max && b.r2_max <= 1.0 &&
                  0.0 < b.t_min && b.t_min <= b.t_max && 0.0 <= b.alpha_min &&
                  b.alpha_min <= b.alpha_max && 1 <= b.a_min && b.a_min <= b.a_max;
  if (!ok) fail(ErrorKind::config, "strategy bounds: need 0 < min <= max (r <= 1, a >= 1)");
}

double average_retention(const PruningStrategy& s, const StageLayout& layout) {
  return (s.r1 * layout.l1 + s.r1 * s.r2 * layout.l2 + s.r1 * s.r2 * s.r3 * layout.l3) /
         layout.total();
}

std::optional<double> solve_r3(double r1, double r2, const StageLayout& layout,
                               Budget budget) {
  const double remaining =
      budget.r_bar * layout.total() - r1 * layout.l1 - r1 * r2 * layout.l2;
  const double r3 = remaining / (r1 * r2 * layout.l3);
  if (!(r3 > 0.0)) return std::nullopt;
  if (r3 > 1.0) {
    if (r3 - 1.0 <= 1e-12) return 1.0;
    return std::nullopt;
  }
  return r3;
}

std::array<std::size_t, 3> stage_token_counts(std::size_t n_visual,
                                              const PruningStrategy& s) {
  const auto keep = [](std::size_t n, double r) {
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 0.5));
    return k < 1 ? std::size_t{1} : (k > n ? n : k);
  };
  std::array<std::size_t, 3> counts{};
  counts[0] = keep(n_visual, s.r1);
  counts[1] = keep(counts[0], s.r2);
  counts[2] = keep(counts[1], s.r3);
  return counts;
}

void require_feasible(const PruningStrategy& s, const StageLayout& layout,
                      Budget budget, double tol) {
  validate(layout);
  for (double r : {s.r1, s.r2, s.r3}) {
    if (!(r > 0.0 && r <= 1.0)) {
      fail(ErrorKind::infeasible, "strategy: retention ratios must lie in (0, 1]");
    }
  }
  if (!(s.t > 0.0) || !(s.alpha >= 0.0) || s.a < 1) {
    fail(ErrorKind::infeasible, "strategy: need t > 0, alpha >= 0, a >= 1");
  }
  const double got = average_retention(s, layout);
  if (std::abs(got - budget.r_bar) > tol) {
    fail(ErrorKind::infeasible, "strategy: average retention " + std::to_string(got) +
                                    " does not meet budget " +
                                    std::to_string(budget.r_bar));
  }
}

}  // namespace vflow::schedule
