#include "bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"
#include "toylmm.hpp"

namespace vflow::bo {
namespace {

Point uniform_point(Rng& rng, std::size_t dim) {
  Point p(dim);
  for (auto& v : p) v = rng.uniform();
  return p;
}

std::optional<Point> canonical(const BoProblem& problem, const Point& raw) {
  if (!problem.canonicalize) return raw;
  return problem.canonicalize(raw);
}

double lerp(double lo, double hi, double u) { return lo + u * (hi - lo); }

double unlerp(double lo, double hi, double v) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }

}  // namespace

Point propose_next(const GaussianProcess& gp, const BoProblem& problem, Rng& rng,
                   double best_y, double xi, int candidates, int retry_candidates) {
  for (int count : {candidates, retry_candidates}) {
    std::optional<Point> best;
    double best_ei = -1.0;
    for (int i = 0; i < count; ++i) {
      const auto c = canonical(problem, uniform_point(rng, problem.dim));
      if (!c) continue;
      const double ei = expected_improvement(gp, *c, best_y, xi);
      if (ei > best_ei) {
        best_ei = ei;
        best = *c;
      }
    }
    if (best) return *best;
  }
  fail(ErrorKind::infeasible, "propose_next: no feasible candidate among " +
                                  std::to_string(candidates) + " + " +
                                  std::to_string(retry_candidates) + " draws");
}

BoResult bayes_optimize(const BoProblem& problem, const BoSettings& settings,
                        const std::vector<Sample>& replay, const SampleCallback& on_sample) {
  if (settings.evaluations < 1) fail(ErrorKind::argument, "optimize: need at least one evaluation");
  if (settings.init_count < 2) fail(ErrorKind::argument, "optimize: need at least two initial points");
  if (problem.dim == 0 || !problem.evaluate) fail(ErrorKind::argument, "optimize: empty problem");

  Rng rng(settings.seed);
  BoResult result;
  const auto evaluate = [&](const Point& x) {
    const std::size_t idx = result.history.size();
    Sample s{x, 0.0};
    if (idx < replay.size()) {
      const Point& recorded = replay[idx].x;
      bool same = recorded.size() == x.size();
      for (std::size_t i = 0; same && i < x.size(); ++i) same = std::abs(recorded[i] - x[i]) <= 1e-9;
      if (!same) {
        fail(ErrorKind::config, "optimize: recorded observation " + std::to_string(idx) +
                                    " does not match this run's proposal");
      }
      s.y = replay[idx].y;
    } else {
      s.y = problem.evaluate(x);
    }
    result.history.push_back(s);
    if (on_sample) on_sample(idx, result.history.back());
  };

  const int initial = std::min(settings.init_count, settings.evaluations);
  for (int i = 0; i < initial; ++i) {
    std::optional<Point> x;
    for (int draw = 0; !x && draw < settings.max_init_draws; ++draw) {
      x = canonical(problem, uniform_point(rng, problem.dim));
    }
    if (!x) fail(ErrorKind::infeasible, "optimize: no feasible initial point found");
    evaluate(*x);
  }

  while (static_cast<int>(result.history.size()) < settings.evaluations) {
    std::vector<Point> xs;
    std::vector<double> ys;
    for (const auto& s : result.history) {
      xs.push_back(s.x);
      ys.push_back(s.y);
    }
    const double best_y = *std::max_element(ys.begin(), ys.end());
    const GaussianProcess gp = GaussianProcess::fit(std::move(xs), std::move(ys));
    evaluate(propose_next(gp, problem, rng, best_y, settings.xi, settings.candidates,
                          settings.retry_candidates));
  }

  for (std::size_t i = 1; i < result.history.size(); ++i) {
    if (result.history[i].y > result.history[result.incumbent].y) result.incumbent = i;
  }
  return result;
}

schedule::StrategyBounds SearchSpace::feasible_box() const {
  schedule::validate(bounds);
  schedule::validate(layout);
  if (!(budget.r_bar > 0.0 && budget.r_bar <= 1.0)) {
    fail(ErrorKind::config, "budget must lie in (0, 1]");
  }
  const double target = budget.r_bar * layout.total();
  const double l1 = layout.l1, l2 = layout.l2, l3 = layout.l3;
  schedule::StrategyBounds box = bounds;
  // r3 <= 1 with r2 at its max, and r3 > 0 with r2 at its min.
  box.r1_min = std::max(bounds.r1_min, target / (l1 + bounds.r2_max * (l2 + l3)));
  box.r1_max = std::min(bounds.r1_max, target / (l1 + bounds.r2_min * l2));
  if (box.r1_min > box.r1_max) {
    fail(ErrorKind::infeasible, "budget " + std::to_string(budget.r_bar) +
                                    " is unreachable inside the strategy bounds");
  }
  box.r2_min = std::max(bounds.r2_min, (target - box.r1_max * l1) / (box.r1_max * (l2 + l3)));
  box.r2_max = std::min(bounds.r2_max, (target - box.r1_min * l1) / (box.r1_min * l2));
  if (box.r2_min > box.r2_max) {
    fail(ErrorKind::infeasible, "budget " + std::to_string(budget.r_bar) +
                                    " is unreachable inside the strategy bounds");
  }
  return box;
}

std::optional<schedule::PruningStrategy> SearchSpace::realize(const Point& x) const {
  if (x.size() != kDim) fail(ErrorKind::shape, "search space: expected a 5-D point");
  const schedule::StrategyBounds box = feasible_box();
  schedule::PruningStrategy s;
  s.r1 = lerp(box.r1_min, box.r1_max, x[0]);
  s.r2 = lerp(box.r2_min, box.r2_max, x[1]);
  s.t = lerp(box.t_min, box.t_max, x[2]);
  s.alpha = lerp(box.alpha_min, box.alpha_max, x[3]);
  const int a_span = box.a_max - box.a_min + 1;
  s.a = std::min(box.a_max, box.a_min + static_cast<int>(std::floor(x[4] * a_span)));
  if (!(s.r1 > 0.0 && s.r1 <= 1.0 && s.r2 > 0.0 && s.r2 <= 1.0)) return std::nullopt;
  const auto r3 = schedule::solve_r3(s.r1, s.r2, layout, budget);
  if (!r3) return std::nullopt;
  s.r3 = *r3;
  return s;
}

Point SearchSpace::normalize(const schedule::PruningStrategy& s) const {
  const schedule::StrategyBounds box = feasible_box();
  return {unlerp(box.r1_min, box.r1_max, s.r1), unlerp(box.r2_min, box.r2_max, s.r2),
          unlerp(box.t_min, box.t_max, s.t), unlerp(box.alpha_min, box.alpha_max, s.alpha),
          (s.a - box.a_min + 0.5) / (box.a_max - box.a_min + 1)};
}

std::optional<Point> SearchSpace::canonicalize(const Point& x) const {
  const auto s = realize(x);
  if (!s) return std::nullopt;
  return normalize(*s);
}

SearchSpace single_stage_space(SearchSpace space) {
  space.bounds.r1_min = space.bounds.r1_max = space.budget.r_bar;
  space.bounds.r2_min = space.bounds.r2_max = 1.0;
  return space;
}

OptimizationRun optimize(const StrategyObjective& objective, const SearchSpace& space,
                         const BoSettings& settings, const std::vector<Observation>& replay,
                         const ObservationCallback& on_observation) {
  space.feasible_box();
  const auto strategy_at = [&](const Point& x) {
    const auto s = space.realize(x);
    if (!s) fail(ErrorKind::infeasible, "optimize: evaluated point is infeasible");
    return *s;
  };

  BoProblem problem;
  problem.dim = SearchSpace::kDim;
  problem.canonicalize = [&](const Point& x) { return space.canonicalize(x); };
  problem.evaluate = [&](const Point& x) { return objective(strategy_at(x)); };

  std::vector<Sample> replay_samples;
  for (const auto& o : replay) replay_samples.push_back({o.x, o.y});

  OptimizationRun run;
  run.init_count = settings.init_count;
  run.evaluations = settings.evaluations;
  run.seed = settings.seed;
  const auto result = bayes_optimize(
      problem, settings, replay_samples, [&](std::size_t idx, const Sample& s) {
        run.history.push_back({s.x, strategy_at(s.x), s.y});
        if (on_observation) on_observation(idx, run.history.back());
      });
  run.incumbent = result.incumbent;
  return run;
}

OptimizationRun optimize(const toy::FlowEvaluator& evaluator, const SearchSpace& space,
                         const BoSettings& settings, const std::vector<Observation>& replay,
                         const ObservationCallback& on_observation) {
  return optimize([&](const schedule::PruningStrategy& s) { return evaluator.evaluate(s).total; },
                  space, settings, replay, on_observation);
}

LatticeResult brute_force_search(const StrategyObjective& objective, const SearchSpace& space,
                                 std::array<int, 5> resolution) {
  const schedule::StrategyBounds box = space.feasible_box();
  const auto axis = [](double lo, double hi, int count) {
    std::vector<double> v;
    if (count <= 1 || hi <= lo) return std::vector<double>{lo};
    for (int i = 0; i < count; ++i) v.push_back(lo + (hi - lo) * i / (count - 1));
    return v;
  };
  const auto r1s = axis(box.r1_min, box.r1_max, resolution[0]);
  const auto r2s = axis(box.r2_min, box.r2_max, resolution[1]);
  const auto ts = axis(box.t_min, box.t_max, resolution[2]);
  const auto alphas = axis(box.alpha_min, box.alpha_max, resolution[3]);
  std::vector<int> as;
  for (double a : axis(box.a_min, box.a_max, resolution[4])) {
    const int v = static_cast<int>(std::floor(a + 0.5));
    if (std::find(as.begin(), as.end(), v) == as.end()) as.push_back(v);
  }
  const std::size_t points = r1s.size() * r2s.size() * ts.size() * alphas.size() * as.size();
  if (points > 100'000) fail(ErrorKind::argument, "brute_force_search: lattice exceeds 1e5 points");

  LatticeResult best;
  bool found = false;
  for (double r1 : r1s) {
    for (double r2 : r2s) {
      const auto r3 = schedule::solve_r3(r1, r2, space.layout, space.budget);
      if (!r3) continue;
      for (double t : ts) {
        for (double alpha : alphas) {
          for (int a : as) {
            const schedule::PruningStrategy s{r1, r2, *r3, t, alpha, a};
            const double y = objective(s);
            ++best.evaluated;
            if (!found || y > best.y) {
              found = true;
              best.best = s;
              best.y = y;
            }
          }
        }
      }
    }
  }
  if (!found) fail(ErrorKind::infeasible, "brute_force_search: no feasible lattice point");
  return best;
}

std::vector<schedule::PruningStrategy> random_feasible_strategies(const SearchSpace& space,
                                                                  std::size_t count,
                                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<schedule::PruningStrategy> out;
  std::size_t draws = 0;
  while (out.size() < count) {
    if (++draws > 1'000'000 + 1000 * count) {
      fail(ErrorKind::infeasible, "random_feasible_strategies: feasible region too small");
    }
    if (const auto s = space.realize(uniform_point(rng, SearchSpace::kDim))) out.push_back(*s);
  }
  return out;
}

}  // namespace vflow::bo
