#include <cmath>
#include <random>

#include "costmodel.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace vflow;
using namespace vflow::cost;

namespace {
const schedule::StageLayout k9910{9, 9, 10};
}

TEST_CASE("layer flops") {
  ModelDims d{1, 64, 256, 4, 2};
  CHECK(layer_flops(100, d) == 6'195'200.0);
  CHECK(layer_flops(1, d) == 4.0 * 64 * 64 + 2.0 * 64 + 2.0 * 64 * 256);
  for (double n : {1.0, 7.0, 100.0, 5000.0}) CHECK(layer_flops(2 * n, d) > 2 * layer_flops(n, d));
}

TEST_CASE("identity strategy costs nothing extra") {
  const auto r = pipeline_costs(576, 40, {1, 1, 1}, k9910, {});
  CHECK(r.flops_reduction == 0.0);
  CHECK(r.kv_reduction == 0.0);
  CHECK(r.flops_total == r.flops_baseline);
}

TEST_CASE("kv reduction equals the budget share without text") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double r1 = u(rng), r2 = u(rng);
    const double r_bar = u(rng);
    const auto r3 = schedule::solve_r3(r1, r2, k9910, {r_bar});
    if (!r3) continue;
    // 4096 tokens keeps rounding error in the counts below 1e-3.
    const auto rep = pipeline_costs(4096, 0, {r1, r2, *r3}, k9910, {});
    CHECK(rep.kv_reduction == doctest::Approx(1 - r_bar).epsilon(2e-3));
  }
  const auto uniform = pipeline_costs(1000, 0, {0.3, 1, 1}, k9910, {});
  CHECK(uniform.kv_reduction == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("kv reduction at half budget with many visual tokens") {
  const auto r = pipeline_costs(7290, 60, {0.75, 0.6, *schedule::solve_r3(0.75, 0.6, k9910, {0.5})}, k9910, {});
  CHECK(r.kv_reduction >= 0.485);
  CHECK(r.kv_reduction <= 0.500);
}

TEST_CASE("merged tokens count toward layer lengths") {
  const schedule::PruningStrategy s{0.5, 0.5, 0.5};
  const auto plain = pipeline_costs(100, 10, s, k9910, {});
  const auto merged = pipeline_costs(100, 10, s, k9910, {}, {5, 0, 0});
  CHECK(merged.kv_bytes_total == plain.kv_bytes_total + 9 * 2 * 5 * 3584 * 2.0);
  CHECK(merged.flops_total > plain.flops_total);
}

TEST_CASE("reductions ignore the element size") {
  ModelDims two, four;
  four.bytes_per_value = 4;
  const schedule::PruningStrategy s{0.4, 0.5, 0.8};
  const auto a = pipeline_costs(729, 20, s, k9910, two);
  const auto b = pipeline_costs(729, 20, s, k9910, four);
  CHECK(a.kv_reduction == b.kv_reduction);
  CHECK(a.flops_reduction == b.flops_reduction);
  CHECK(b.kv_bytes_total == 2 * a.kv_bytes_total);
}

TEST_CASE("sweep keeps input order") {
  const std::vector<SweepEntry> entries{{{1.0}, {1, 1, 1}}, {{0.25}, {0.4, 0.5, 0.8}}, {{0.5}, {0.5, 1, 1}}};
  const auto reports = table_sweep(entries, 729, 20, k9910, {});
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].kv_reduction == 0.0);
  CHECK(reports[0].budget == 1.0);
  CHECK(reports[1].budget == 0.25);
  CHECK(reports[2].budget == 0.5);
  CHECK(reports[1].kv_reduction > reports[2].kv_reduction);
}

TEST_CASE("dims validation and csv") {
  ModelDims bad;
  bad.bytes_per_value = 3;
  CHECK(fixtures::error_kind([&] { pipeline_costs(10, 1, {1, 1, 1}, k9910, bad); }) == ErrorKind::config);
  CHECK(fixtures::error_kind([&] { pipeline_costs(10, 1, {1, 1, 1}, {4, 4, 4}, {}); }) == ErrorKind::config);
  const std::string header = csv_header();
  CHECK(header.find("kv_reduction") != std::string::npos);
  const auto row = csv_row(pipeline_costs(729, 20, {0.4, 0.5, 0.8}, k9910, {}));
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
}
