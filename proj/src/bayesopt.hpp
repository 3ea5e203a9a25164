#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gp.hpp"
#include "prng.hpp"
#include "schedule.hpp"

namespace vflow::toy {
class FlowEvaluator;
}

namespace vflow::bo {

struct BoSettings {
  int evaluations = 50;  // total objective evaluations, initial design included
  int init_count = 10;
  std::uint64_t seed = 7;
  double xi = 0.01;  // standardized units
  int candidates = 1024;
  int retry_candidates = 8192;
  int max_init_draws = 1'000'000;
};

struct Sample {
  Point x;
  double y = 0.0;
};

/// A maximization problem over the unit cube. canonicalize maps a raw draw
/// to the point actually evaluated (snapping integers, collapsing fixed
/// axes) or returns nullopt when the draw is infeasible.
struct BoProblem {
  std::size_t dim = 0;
  std::function<std::optional<Point>(const Point&)> canonicalize;
  std::function<double(const Point&)> evaluate;
};

struct BoResult {
  std::vector<Sample> history;
  std::size_t incumbent = 0;
};

using SampleCallback = std::function<void(std::size_t index, const Sample&)>;

/// Draws `candidates` uniform points, keeps the feasible ones and returns the
/// EI argmax (first on ties). Retries once with retry_candidates before
/// giving up with an infeasible error.
Point propose_next(const GaussianProcess& gp, const BoProblem& problem, Rng& rng,
                   double best_y, double xi, int candidates, int retry_candidates);

/// Uniform feasible initial design, then fit -> propose -> evaluate until
/// settings.evaluations points exist. Entries of `replay` stand in for the
/// first evaluations (their x must match what the run would propose). The
/// callback fires after every evaluation, so a run that throws still leaves
/// its partial history with the caller.
BoResult bayes_optimize(const BoProblem& problem, const BoSettings& settings,
                        const std::vector<Sample>& replay = {},
                        const SampleCallback& on_sample = {});

/// Pruning-strategy search space. Axes of the unit 5-cube are
/// (r1, r2, t, alpha, a); r3 is derived from the budget.
struct SearchSpace {
  static constexpr std::size_t kDim = 5;

  schedule::StrategyBounds bounds;
  schedule::StageLayout layout;
  schedule::Budget budget{0.25};

  /// Bounds shrunk on r1 and r2 to the projection of the feasible set.
  /// Throws infeasible when the budget cannot be met inside the box.
  schedule::StrategyBounds feasible_box() const;

  std::optional<schedule::PruningStrategy> realize(const Point& x) const;
  Point normalize(const schedule::PruningStrategy& s) const;
  std::optional<Point> canonicalize(const Point& x) const;
};

/// The ablation that prunes once before the LM to the budget and keeps
/// every token afterwards: r = (budget, 1, 1).
SearchSpace single_stage_space(SearchSpace space);

struct Observation {
  Point x;
  schedule::PruningStrategy strategy;
  double y = 0.0;
};

struct OptimizationRun {
  std::vector<Observation> history;
  std::size_t incumbent = 0;
  int init_count = 0;
  int evaluations = 0;
  std::uint64_t seed = 0;

  const Observation& best() const { return history.at(incumbent); }
};

using StrategyObjective = std::function<double(const schedule::PruningStrategy&)>;
using ObservationCallback = std::function<void(std::size_t index, const Observation&)>;

OptimizationRun optimize(const StrategyObjective& objective, const SearchSpace& space,
                         const BoSettings& settings,
                         const std::vector<Observation>& replay = {},
                         const ObservationCallback& on_observation = {});

OptimizationRun optimize(const toy::FlowEvaluator& evaluator, const SearchSpace& space,
                         const BoSettings& settings,
                         const std::vector<Observation>& replay = {},
                         const ObservationCallback& on_observation = {});

struct LatticeResult {
  schedule::PruningStrategy best;
  double y = 0.0;
  std::size_t evaluated = 0;
};

/// Exhaustive search over an evenly spaced lattice of the feasible box,
/// resolution given per axis in (r1, r2, t, alpha, a) order.
LatticeResult brute_force_search(const StrategyObjective& objective, const SearchSpace& space,
                                 std::array<int, 5> resolution);

/// `count` uniform feasible strategies drawn by rejection.
std::vector<schedule::PruningStrategy> random_feasible_strategies(const SearchSpace& space,
                                                                  std::size_t count,
                                                                  std::uint64_t seed);

}  // namespace vflow::bo
