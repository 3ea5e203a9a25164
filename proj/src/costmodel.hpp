#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "schedule.hpp"

namespace vflow::cost {

struct ModelDims {
  int lm_layers = 28;
  int hidden = 3584;
  int ffn = 18944;
  int heads = 28;
  int bytes_per_value = 2;
};

void validate(const ModelDims& dims);

struct CostReport {
  double budget = 1.0;  // r_bar the schedule was built for
  double flops_total = 0.0;
  double flops_baseline = 0.0;
  double kv_bytes_total = 0.0;
  double kv_bytes_baseline = 0.0;
  double flops_reduction = 0.0;
  double kv_reduction = 0.0;
};

/// Prefill FLOPs of one decoder layer over n positions:
/// 4 n d^2 (projections) + 2 n^2 d (scores and values) + 2 n d m (FFN).
double layer_flops(double n, const ModelDims& dims);

/// Per-layer length = n_text + visual tokens alive in that layer's stage,
/// fused tokens included (merged_counts[i] adds to stage i). The baseline
/// keeps every token in every layer.
CostReport pipeline_costs(std::int64_t n_visual, std::int64_t n_text,
                          const schedule::PruningStrategy& s,
                          const schedule::StageLayout& layout, const ModelDims& dims,
                          std::array<std::int64_t, 3> merged_counts = {0, 0, 0});

struct SweepEntry {
  schedule::Budget budget;
  schedule::PruningStrategy strategy;
};

/// One report per entry, in input order.
std::vector<CostReport> table_sweep(const std::vector<SweepEntry>& entries,
                                    std::int64_t n_visual, std::int64_t n_text,
                                    const schedule::StageLayout& layout,
                                    const ModelDims& dims);

std::string csv_header();
std::string csv_row(const CostReport& r);

}  // namespace vflow::cost
