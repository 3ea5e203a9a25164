#pragma once

#include <array>
#include <cstddef>
#include <optional>

namespace vflow::schedule {

/// Layer counts of the three contiguous pruning stages.
struct StageLayout {
  int l1 = 4;
  int l2 = 4;
  int l3 = 4;

  int total() const { return l1 + l2 + l3; }
  bool operator==(const StageLayout&) const = default;
};

void validate(const StageLayout& layout);

/// (r1, r2, r3) retention per stage, threshold sensitivity t, entropy
/// weight alpha and recycling grid side a.
struct PruningStrategy {
  double r1 = 1.0;
  double r2 = 1.0;
  double r3 = 1.0;
  double t = 1.0;
  double alpha = 0.0;
  int a = 1;

  bool operator==(const PruningStrategy&) const = default;
};

/// Target layer-weighted mean fraction of visual tokens kept.
struct Budget {
  double r_bar = 1.0;
};

/// Search box for the free strategy variables. r3 is never searched; it
/// follows from the budget.
struct StrategyBounds {
  double r1_min = 0.05, r1_max = 1.0;
  double r2_min = 0.05, r2_max = 1.0;
  double t_min = 0.25, t_max = 2.0;
  double alpha_min = 0.0, alpha_max = 1.0;
  int a_min = 1, a_max = 8;

  bool operator==(const StrategyBounds&) const = default;
};

void validate(const StrategyBounds& bounds);

/// (r1 L1 + r1 r2 L2 + r1 r2 r3 L3) / L.
double average_retention(const PruningStrategy& s, const StageLayout& layout);

/// r3 that makes average_retention hit the budget exactly, or nullopt when
/// that r3 falls outside (0, 1]. Values that overshoot 1 by rounding noise
/// only (<= 1e-12) are returned as 1.
std::optional<double> solve_r3(double r1, double r2, const StageLayout& layout,
                               Budget budget);

/// Nominal visual-token count kept by each stage, rounding half up and
/// never dropping below one token.
std::array<std::size_t, 3> stage_token_counts(std::size_t n_visual,
                                              const PruningStrategy& s);

/// Throws infeasible unless 0 < r_i <= 1, the bounds on t/alpha/a hold for
/// basic sanity, and the strategy meets the budget within tol.
void require_feasible(const PruningStrategy& s, const StageLayout& layout,
                      Budget budget, double tol = 1e-9);

}  // namespace vflow::schedule
