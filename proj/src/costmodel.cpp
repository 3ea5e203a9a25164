#include "costmodel.hpp"

#include <cstdio>

#include "error.hpp"

namespace vflow::cost {

void validate(const ModelDims& d) {
  if (d.lm_layers <= 0 || d.hidden <= 0 || d.ffn <= 0 || d.heads <= 0) {
    fail(ErrorKind::config, "model dims must be positive");
  }
  if (d.bytes_per_value != 2 && d.bytes_per_value != 4) {
    fail(ErrorKind::config, "bytes per value must be 2 or 4");
  }
}

double layer_flops(double n, const ModelDims& dims) {
  const double d = dims.hidden;
  const double m = dims.ffn;
  return 4.0 * n * d * d + 2.0 * n * n * d + 2.0 * n * d * m;
}

CostReport pipeline_costs(std::int64_t n_visual, std::int64_t n_text,
                          const schedule::PruningStrategy& s,
                          const schedule::StageLayout& layout, const ModelDims& dims,
                          std::array<std::int64_t, 3> merged_counts) {
  validate(dims);
  schedule::validate(layout);
  if (layout.total() != dims.lm_layers) {
    fail(ErrorKind::config, "stage layout covers " + std::to_string(layout.total()) +
                                " layers but the model has " + std::to_string(dims.lm_layers));
  }
  if (n_visual < 1 || n_text < 0) fail(ErrorKind::argument, "token counts must be positive");

  const auto counts = schedule::stage_token_counts(static_cast<std::size_t>(n_visual), s);
  const int stage_layers[3] = {layout.l1, layout.l2, layout.l3};
  const double full = static_cast<double>(n_visual + n_text);
  const double kv_per_token = 2.0 * dims.hidden * dims.bytes_per_value;

  CostReport r;
  r.budget = schedule::average_retention(s, layout);
  for (int stage = 0; stage < 3; ++stage) {
    const double n = static_cast<double>(n_text) +
                     static_cast<double>(counts[static_cast<std::size_t>(stage)]) +
                     static_cast<double>(merged_counts[static_cast<std::size_t>(stage)]);
    r.flops_total += stage_layers[stage] * layer_flops(n, dims);
    r.kv_bytes_total += stage_layers[stage] * n * kv_per_token;
  }
  r.flops_baseline = dims.lm_layers * layer_flops(full, dims);
  r.kv_bytes_baseline = dims.lm_layers * full * kv_per_token;
  r.flops_reduction = 1.0 - r.flops_total / r.flops_baseline;
  r.kv_reduction = 1.0 - r.kv_bytes_total / r.kv_bytes_baseline;
  return r;
}

std::vector<CostReport> table_sweep(const std::vector<SweepEntry>& entries,
                                    std::int64_t n_visual, std::int64_t n_text,
                                    const schedule::StageLayout& layout,
                                    const ModelDims& dims) {
  std::vector<CostReport> out;
  for (const auto& e : entries) {
    CostReport r = pipeline_costs(n_visual, n_text, e.strategy, layout, dims);
    r.budget = e.budget.r_bar;
    out.push_back(r);
  }
  return out;
}

std::string csv_header() {
  return "budget,token_reduction,flops_t,flops_baseline_t,flops_reduction,kv_mb,kv_baseline_mb,"
         "kv_reduction";
}

std::string csv_row(const CostReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.6f,%.6f,%.4f,%.3f,%.3f,%.4f", r.budget,
                1.0 - r.budget, r.flops_total / 1e12, r.flops_baseline / 1e12,
                r.flops_reduction, r.kv_bytes_total / (1024.0 * 1024.0),
                r.kv_bytes_baseline / (1024.0 * 1024.0), r.kv_reduction);
  return buf;
}

}  // namespace vflow::cost
