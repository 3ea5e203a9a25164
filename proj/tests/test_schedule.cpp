#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "schedule.hpp"

using namespace vflow;
using namespace vflow::schedule;

namespace {
const StageLayout k9910{9, 9, 10};
}

TEST_CASE("average retention") {
  CHECK(average_retention({1, 1, 1}, {3, 5, 2}) == 1.0);
  CHECK(average_retention({0.4, 0.5, 0.8}, k9910) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(average_retention({0.5, 1, 1}, k9910) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("solve_r3") {
  CHECK(*solve_r3(0.4, 0.5, k9910, {0.25}) == doctest::Approx(0.8).epsilon(1e-13));
  CHECK(!solve_r3(0.6, 0.6, k9910, {0.25}));
  CHECK(*solve_r3(1.0, 1.0, k9910, {1.0}) == 1.0);
  CHECK(!solve_r3(0.1, 0.1, k9910, {0.9}));  // r3 would exceed 1
}

TEST_CASE("solve_r3 round trip and feasibility boundary") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int feasible = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const StageLayout layout{1 + static_cast<int>(rng() % 12), 1 + static_cast<int>(rng() % 12),
                             1 + static_cast<int>(rng() % 12)};
    const double r1 = 0.01 + 0.99 * u(rng), r2 = 0.01 + 0.99 * u(rng);
    const double r_bar = 0.01 + 0.99 * u(rng);
    const double L = layout.total();
    const double slack = r_bar * L - r1 * layout.l1 - r1 * r2 * layout.l2;
    const auto r3 = solve_r3(r1, r2, layout, {r_bar});
    CHECK(r3.has_value() == (slack > 0 && slack <= r1 * r2 * layout.l3 * (1 + 1e-12)));
    if (r3) {
      ++feasible;
      CHECK(std::abs(average_retention({r1, r2, *r3}, layout) - r_bar) <= 1e-12);
    }
  }
  CHECK(feasible > 100);
}

TEST_CASE("average retention is increasing in each ratio") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 500; ++trial) {
    PruningStrategy s{u(rng), u(rng), u(rng)};
    const double base = average_retention(s, {4, 4, 4});
    for (double PruningStrategy::*r : {&PruningStrategy::r1, &PruningStrategy::r2, &PruningStrategy::r3}) {
      PruningStrategy up = s;
      up.*r += 0.01;
      CHECK(average_retention(up, {4, 4, 4}) > base);
    }
  }
}

TEST_CASE("stage token counts") {
  CHECK(stage_token_counts(100, {0.4, 0.5, 0.8}) == std::array<std::size_t, 3>{40, 20, 16});
  CHECK(stage_token_counts(7, {0.5, 0.5, 0.5}) == std::array<std::size_t, 3>{4, 2, 1});
  CHECK(stage_token_counts(33, {1, 1, 1}) == std::array<std::size_t, 3>{33, 33, 33});
  CHECK(stage_token_counts(10, {0.01, 0.01, 0.01}) == std::array<std::size_t, 3>{1, 1, 1});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 3000;
    const auto c = stage_token_counts(n, {u(rng), u(rng), u(rng)});
    CHECK(c[0] <= n);
    CHECK(c[1] <= c[0]);
    CHECK(c[2] <= c[1]);
    CHECK(c[2] >= 1);
  }
}

TEST_CASE("feasibility checks") {
  CHECK_NOTHROW(require_feasible({0.4, 0.5, 0.8}, k9910, {0.25}));
  CHECK(fixtures::error_kind([] { require_feasible({0.4, 0.5, 0.9}, k9910, {0.25}); }) == ErrorKind::infeasible);
  CHECK(fixtures::error_kind([] { require_feasible({1.2, 0.5, 0.8}, k9910, {0.25}); }) == ErrorKind::infeasible);
  CHECK(fixtures::error_kind([] { require_feasible({1, 1, 1, 1.0, 0.0, 0}, k9910, {1.0}); }) == ErrorKind::infeasible);
  CHECK(fixtures::error_kind([] { validate(StageLayout{0, 4, 4}); }) == ErrorKind::config);
  StrategyBounds b;
  b.t_min = 3.0;
  CHECK(fixtures::error_kind([&] { validate(b); }) == ErrorKind::config);
}
