#include <algorithm>
#include <cmath>
#include <random>

#include "bayesopt.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "gp.hpp"
#include "prng.hpp"

using namespace vflow;
using namespace vflow::bo;

namespace {

std::vector<Point> uniform_points(std::size_t n, std::uint64_t seed, std::size_t dim = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> xs(n, Point(dim));
  for (auto& x : xs) {
    for (auto& v : x) v = u(rng);
  }
  return xs;
}

}  // namespace

TEST_CASE("normal helpers") {
  CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021));
  CHECK(expected_improvement(0.0, 1.0, 0.0, 0.0) == doctest::Approx(0.3989422804));
  CHECK(expected_improvement(2.0, 0.0, 1.0, 0.5) == 0.5);
  CHECK(expected_improvement(0.5, 0.0, 1.0, 0.0) == 0.0);
}

TEST_CASE("GP interpolates observations") {
  const auto gp = GaussianProcess::fit({{0.2, 0.3}, {0.7, 0.9}}, {1.5, -0.5});
  CHECK(gp.posterior({0.2, 0.3}).mean == doctest::Approx(1.5).epsilon(1e-3));
  CHECK(gp.posterior({0.7, 0.9}).mean == doctest::Approx(-0.5).epsilon(1e-3));
  CHECK(gp.posterior({0.2, 0.3}).std <= 1e-2);
  CHECK(fixtures::error_kind([] { GaussianProcess::fit({{0.1}}, {1.0}); }) == ErrorKind::argument);
}

TEST_CASE("GP with constant targets") {
  const auto gp = GaussianProcess::fit({{0.1}, {0.4}, {0.5}}, {2.0, 2.0, 2.0});
  for (double x : {0.0, 0.3, 0.9, 50.0}) CHECK(gp.posterior({x}).mean == doctest::Approx(2.0));
  CHECK(gp.posterior({50.0}).std == doctest::Approx(gp.prior_std()).epsilon(0.05));
}

TEST_CASE("GP reverts to the prior far from data") {
  const auto xs = uniform_points(12, 3, 2);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(std::sin(4 * x[0]) + x[1]);
  const auto gp = GaussianProcess::fit(xs, ys);
  const auto far = gp.posterior({40.0, -40.0});
  CHECK(far.std == doctest::Approx(gp.prior_std()).epsilon(0.05));
  CHECK(far.mean == doctest::Approx(gp.y_mean()).epsilon(1e-6));
}

TEST_CASE("GP handles duplicate inputs") {
  CHECK_NOTHROW(GaussianProcess::fit({{0.5}, {0.5}, {0.1}}, {1.0, 1.0, 0.0}));
}

TEST_CASE("GP posteriors mirror with the data") {
  const auto xs = uniform_points(8, 4, 3);
  std::vector<Point> mirrored;
  std::vector<double> ys;
  for (const auto& x : xs) {
    mirrored.push_back({1 - x[0], 1 - x[1], 1 - x[2]});
    ys.push_back(x[0] * x[0] - x[1] + 0.5 * x[2]);
  }
  const auto a = GaussianProcess::fit(xs, ys);
  const auto b = GaussianProcess::fit(mirrored, ys);
  for (const auto& q : uniform_points(20, 5, 3)) {
    const auto pa = a.posterior(q);
    const auto pb = b.posterior({1 - q[0], 1 - q[1], 1 - q[2]});
    CHECK(pa.mean == doctest::Approx(pb.mean).epsilon(1e-9));
    CHECK(pa.std == doctest::Approx(pb.std).epsilon(1e-9));
  }
}

TEST_CASE("GP leave-one-out error beats the prior std on a quadratic") {
  const auto xs = uniform_points(20, 6);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(fixtures::quadratic(x));
  double mae = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto rest_x = xs;
    auto rest_y = ys;
    rest_x.erase(rest_x.begin() + static_cast<long>(i));
    rest_y.erase(rest_y.begin() + static_cast<long>(i));
    mae += std::abs(GaussianProcess::fit(rest_x, rest_y).posterior(xs[i]).mean - ys[i]);
  }
  mae /= static_cast<double>(xs.size());
  CHECK(mae < GaussianProcess::fit(xs, ys).prior_std());
}

TEST_CASE("expected improvement is non-negative and vanishes at the incumbent") {
  const auto xs = uniform_points(10, 7);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(fixtures::quadratic(x));
  const auto gp = GaussianProcess::fit(xs, ys);
  const auto best = std::max_element(ys.begin(), ys.end()) - ys.begin();
  // The jitter variance keeps sigma near 1e-3 at data points, so EI there is bounded by
  // sigma * phi(0) rather than reaching zero.
  const auto& incumbent = xs[static_cast<std::size_t>(best)];
  const double sigma = gp.posterior(incumbent).std;
  CHECK(sigma <= 1e-2);
  CHECK(expected_improvement(gp, incumbent, ys[static_cast<std::size_t>(best)], 0.0) <= 0.3989422804 * sigma + 1e-12);
  for (const auto& q : uniform_points(500, 8)) CHECK(expected_improvement(gp, q, ys[static_cast<std::size_t>(best)], 0.01) >= 0.0);
}

TEST_CASE("proposal is the EI argmax among candidates") {
  const auto xs = uniform_points(10, 9);
  std::vector<double> ys;
  for (const auto& x : xs) ys.push_back(fixtures::quadratic(x));
  const auto gp = GaussianProcess::fit(xs, ys);
  const double best = *std::max_element(ys.begin(), ys.end());
  const auto problem = fixtures::quadratic_problem();
  Rng a(42), b(42), c(42);
  const auto p = propose_next(gp, problem, a, best, 0.01, 256, 1024);
  CHECK(p == propose_next(gp, problem, b, best, 0.01, 256, 1024));
  const double ei = expected_improvement(gp, p, best, 0.01);
  for (int i = 0; i < 256; ++i) {
    Point cand(5);
    for (auto& v : cand) v = c.uniform();
    CHECK(expected_improvement(gp, cand, best, 0.01) <= ei);
  }
}

TEST_CASE("proposal fails when nothing is feasible") {
  auto problem = fixtures::quadratic_problem();
  problem.canonicalize = [](const Point&) { return std::optional<Point>(); };
  const auto gp = GaussianProcess::fit(uniform_points(3, 1), {0.0, 1.0, 2.0});
  Rng rng(1);
  CHECK(fixtures::error_kind([&] { propose_next(gp, problem, rng, 2.0, 0.0, 16, 32); }) == ErrorKind::infeasible);
}

TEST_CASE("bayes_optimize bookkeeping") {
  BoSettings settings;
  settings.evaluations = 20;
  settings.init_count = 5;
  settings.seed = 3;
  const auto run = bayes_optimize(fixtures::quadratic_problem(), settings);
  REQUIRE(run.history.size() == 20);
  double best = -1e300;
  for (const auto& s : run.history) best = std::max(best, s.y);
  CHECK(run.history[run.incumbent].y == best);
  CHECK(bayes_optimize(fixtures::quadratic_problem(), settings).history.back().x == run.history.back().x);

  SUBCASE("pure random search when T equals the initial design") {
    settings.evaluations = settings.init_count = 6;
    const auto r = bayes_optimize(fixtures::quadratic_problem(), settings);
    CHECK(r.history.size() == 6);
  }
  SUBCASE("replay reproduces the same run") {
    std::vector<Sample> replay(run.history.begin(), run.history.begin() + 12);
    const auto resumed = bayes_optimize(fixtures::quadratic_problem(), settings, replay);
    for (std::size_t i = 0; i < 20; ++i) CHECK(resumed.history[i].x == run.history[i].x);
  }
  SUBCASE("replay that disagrees is rejected") {
    std::vector<Sample> replay(run.history.begin(), run.history.begin() + 3);
    replay[2].x[0] += 0.1;
    CHECK(fixtures::error_kind([&] { bayes_optimize(fixtures::quadratic_problem(), settings, replay); }) ==
          ErrorKind::config);
  }
  SUBCASE("an evaluation error keeps the partial history") {
    auto problem = fixtures::quadratic_problem();
    int calls = 0;
    problem.evaluate = [&](const Point& x) {
      if (++calls == 8) throw Error(ErrorKind::numeric, "boom");
      return fixtures::quadratic(x);
    };
    std::vector<Sample> seen;
    CHECK_THROWS_AS(bayes_optimize(problem, settings, {}, [&](std::size_t, const Sample& s) { seen.push_back(s); }),
                    Error);
    CHECK(seen.size() == 7);
  }
}

TEST_CASE("search space") {
  SearchSpace space;
  space.budget = {0.25};
  const auto box = space.feasible_box();
  CHECK(box.r1_min >= space.bounds.r1_min);
  CHECK(box.r1_max <= space.bounds.r1_max);

  SUBCASE("every realized strategy meets the budget") {
    const auto strategies = random_feasible_strategies(space, 300, 4);
    for (const auto& s : strategies) {
      CHECK(std::abs(schedule::average_retention(s, space.layout) - 0.25) <= 1e-12);
      CHECK(s.a >= 1);
      CHECK(s.a <= 8);
      CHECK(s.t >= 0.25);
      CHECK(s.t <= 2.0);
      const auto back = space.realize(space.normalize(s)).value();
      CHECK(back.r1 == doctest::Approx(s.r1).epsilon(1e-12));
      CHECK(back.r2 == doctest::Approx(s.r2).epsilon(1e-12));
      CHECK(back.r3 == doctest::Approx(s.r3).epsilon(1e-12));
      CHECK(back.t == doctest::Approx(s.t).epsilon(1e-12));
      CHECK(back.alpha == doctest::Approx(s.alpha).epsilon(1e-12));
      CHECK(back.a == s.a);
    }
  }
  SUBCASE("unit budget admits every draw") {
    space.budget = {1.0};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const Point x{u(rng), u(rng), u(rng), u(rng), u(rng)};
      const auto s = space.realize(x);
      REQUIRE(s.has_value());
      CHECK(s->r1 == 1.0);
      CHECK(s->r2 == 1.0);
      CHECK(s->r3 == 1.0);
    }
  }
  SUBCASE("grid side snaps to integers") {
    const auto c = space.canonicalize({0.5, 0.5, 0.5, 0.5, 0.30});
    REQUIRE(c.has_value());
    CHECK((*c)[4] == doctest::Approx((2 + 0.5) / 8.0));
  }
  SUBCASE("an impossible budget is reported") {
    space.bounds.r1_max = 0.1;
    space.budget = {0.5};
    CHECK(fixtures::error_kind([&] { space.feasible_box(); }) == ErrorKind::infeasible);
  }
  SUBCASE("single stage space") {
    const auto single = single_stage_space(space);
    for (const auto& s : random_feasible_strategies(single, 20, 1)) {
      CHECK(s.r1 == doctest::Approx(0.25));
      CHECK(s.r2 == 1.0);
      CHECK(s.r3 == 1.0);
    }
  }
}

TEST_CASE("strategy optimization keeps every observation feasible") {
  SearchSpace space;
  space.budget = {0.3};
  BoSettings settings;
  settings.evaluations = 15;
  settings.init_count = 5;
  const auto objective = [](const schedule::PruningStrategy& s) {
    return -(s.r1 - 0.5) * (s.r1 - 0.5) - 0.1 * (s.t - 1.0) * (s.t - 1.0) - 0.01 * s.a;
  };
  std::vector<Observation> streamed;
  const auto run = optimize(objective, space, settings, {}, [&](std::size_t, const Observation& o) {
    streamed.push_back(o);
  });
  CHECK(run.history.size() == 15);
  CHECK(streamed.size() == 15);
  double best = -1e300;
  for (std::size_t i = 0; i < run.history.size(); ++i) {
    const auto& o = run.history[i];
    CHECK(std::abs(schedule::average_retention(o.strategy, space.layout) - 0.3) <= 1e-12);
    CHECK(o.y == objective(o.strategy));
    for (double v : o.x) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    best = std::max(best, o.y);
  }
  CHECK(run.best().y == best);
}

TEST_CASE("lattice search") {
  SearchSpace space;
  space.budget = {1.0};
  const auto objective = [](const schedule::PruningStrategy& s) { return s.r1 + s.r2 + s.r3 - 0.01 * s.a; };
  const auto r = brute_force_search(objective, space, {3, 3, 2, 2, 3});
  CHECK(r.best.r1 == 1.0);
  CHECK(r.y == doctest::Approx(3.0 - 0.01));
  const auto again = brute_force_search(objective, space, {3, 3, 2, 2, 3});
  CHECK(again.best == r.best);
  CHECK(again.evaluated == r.evaluated);
  space.budget = {0.25};
  CHECK(fixtures::error_kind([&] { brute_force_search(objective, space, {100, 100, 100, 100, 8}); }) ==
        ErrorKind::argument);
}

TEST_CASE("BO finds the quadratic optimum more often than random search") {
  int bo_hits = 0, random_hits = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    BoSettings settings;
    settings.seed = seed;
    const auto bo_run = bayes_optimize(fixtures::quadratic_problem(), settings);
    bo_hits += fixtures::distance(bo_run.history[bo_run.incumbent].x, fixtures::quadratic_optimum()) <= 0.15;
    settings.init_count = settings.evaluations;
    const auto rnd = bayes_optimize(fixtures::quadratic_problem(), settings);
    random_hits += fixtures::distance(rnd.history[rnd.incumbent].x, fixtures::quadratic_optimum()) <= 0.15;
  }
  CHECK(bo_hits >= 4);
  CHECK(random_hits <= bo_hits);
}
