#include <algorithm>
#include <array>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "app.hpp"
#include "costmodel.hpp"
#include "error.hpp"
#include "imgproc.hpp"
#include "kvfile.hpp"
#include "vflowopt/vflowopt.h"

struct vfo_config {
  vflow::app::RunConfig cfg;
};

struct vfo_session {
  explicit vfo_session(vflow::app::RunConfig cfg) : session(std::move(cfg)) {}
  vflow::app::Session session;
};

struct vfo_run {
  vflow::bo::OptimizationRun run;
  vflow::app::StrategyRecord incumbent;
};

struct vfo_prune_report {
  vflow::app::PruneReport report;
};

namespace {

using namespace vflow;

thread_local std::string g_last_error;

vfo_status status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument: return VFO_ERR_ARGUMENT;
    case ErrorKind::shape: return VFO_ERR_SHAPE;
    case ErrorKind::decode: return VFO_ERR_DECODE;
    case ErrorKind::io: return VFO_ERR_IO;
    case ErrorKind::config: return VFO_ERR_CONFIG;
    case ErrorKind::infeasible: return VFO_ERR_INFEASIBLE;
    case ErrorKind::numeric: return VFO_ERR_NUMERIC;
  }
  return VFO_ERR_INTERNAL;
}

template <typename F>
vfo_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return VFO_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return VFO_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::argument, what);
}

template <typename T, typename Src>
void copy_out(const Src& src, T* dst, std::size_t capacity, std::size_t* count) {
  require(count != nullptr, "count pointer is null");
  *count = src.size();
  if (src.size() > capacity || (src.size() > 0 && dst == nullptr)) {
    throw Error(ErrorKind::argument, "output buffer too small: need " + std::to_string(src.size()));
  }
  std::copy(src.begin(), src.end(), dst);
}

// copy_out reports a short buffer as argument; the API promises BUFFER.
template <typename F>
vfo_status guarded_out(F&& body) {
  const vfo_status s = guarded(std::forward<F>(body));
  if (s == VFO_ERR_ARGUMENT && g_last_error.rfind("output buffer too small", 0) == 0) {
    return VFO_ERR_BUFFER;
  }
  return s;
}

void copy_text(const std::string& text, char* buf, std::size_t capacity, std::size_t* length) {
  require(length != nullptr, "length pointer is null");
  *length = text.size();
  if (buf == nullptr || capacity < text.size() + 1) {
    throw Error(ErrorKind::argument, "output buffer too small: need " + std::to_string(text.size() + 1));
  }
  std::memcpy(buf, text.c_str(), text.size() + 1);
}

schedule::StageLayout to_layout(vfo_layout l) { return {l.l1, l.l2, l.l3}; }
vfo_layout from_layout(const schedule::StageLayout& l) { return {l.l1, l.l2, l.l3}; }

schedule::PruningStrategy to_strategy(const vfo_strategy& s) {
  return {s.r1, s.r2, s.r3, s.t, s.alpha, s.a};
}
vfo_strategy from_strategy(const schedule::PruningStrategy& s) {
  return {s.r1, s.r2, s.r3, s.t, s.alpha, s.a};
}

app::StrategyRecord to_record(const vfo_strategy_record* rec) {
  require(rec != nullptr, "strategy record is null");
  app::StrategyRecord r;
  r.strategy = to_strategy(rec->strategy);
  r.layout = to_layout(rec->layout);
  r.budget.r_bar = rec->budget;
  r.objective = rec->objective;
  r.seed = rec->seed;
  r.ablation = {rec->ablation.calibration != 0, rec->ablation.merge != 0,
                rec->ablation.progressive != 0};
  return r;
}

vfo_strategy_record from_record(const app::StrategyRecord& r) {
  vfo_strategy_record out{};
  out.strategy = from_strategy(r.strategy);
  out.layout = from_layout(r.layout);
  out.budget = r.budget.r_bar;
  out.objective = r.objective;
  out.seed = r.seed;
  out.ablation = {r.ablation.calibration ? 1 : 0, r.ablation.merge ? 1 : 0,
                  r.ablation.progressive ? 1 : 0};
  return out;
}

app::StrategyRecord feasible_record(const vfo_strategy_record* rec) {
  app::StrategyRecord r = to_record(rec);
  schedule::require_feasible(r.strategy, r.layout, r.budget);
  return r;
}

}  // namespace

extern "C" {

const char* vfo_version(void) { return app::kVersion; }

const char* vfo_last_error(void) { return g_last_error.c_str(); }

const char* vfo_status_name(vfo_status status) {
  switch (status) {
    case VFO_OK: return "ok";
    case VFO_ERR_ARGUMENT: return "argument error";
    case VFO_ERR_SHAPE: return "shape error";
    case VFO_ERR_DECODE: return "decode error";
    case VFO_ERR_IO: return "I/O error";
    case VFO_ERR_CONFIG: return "config error";
    case VFO_ERR_INFEASIBLE: return "infeasible strategy";
    case VFO_ERR_NUMERIC: return "numeric error";
    case VFO_ERR_BUFFER: return "buffer too small";
    case VFO_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

vfo_status vfo_average_retention(const vfo_strategy* s, vfo_layout layout, double* out) {
  return guarded([&] {
    require(s && out, "null argument");
    schedule::validate(to_layout(layout));
    *out = schedule::average_retention(to_strategy(*s), to_layout(layout));
  });
}

vfo_status vfo_solve_r3(double r1, double r2, vfo_layout layout, double budget, double* r3) {
  return guarded([&] {
    require(r3 != nullptr, "null argument");
    require(r1 > 0.0 && r1 <= 1.0 && r2 > 0.0 && r2 <= 1.0, "r1 and r2 must lie in (0, 1]");
    schedule::validate(to_layout(layout));
    const auto v = schedule::solve_r3(r1, r2, to_layout(layout), {budget});
    if (!v) fail(ErrorKind::infeasible, "no r3 in (0, 1] meets the budget");
    *r3 = *v;
  });
}

vfo_status vfo_stage_token_counts(size_t n_visual, const vfo_strategy* s, size_t counts[3]) {
  return guarded([&] {
    require(s && counts, "null argument");
    require(n_visual >= 1, "n_visual must be >= 1");
    const auto c = schedule::stage_token_counts(n_visual, to_strategy(*s));
    std::copy(c.begin(), c.end(), counts);
  });
}

vfo_status vfo_entropy_file(const char* path, int32_t patch_size, double* values,
                            size_t capacity, size_t* count, int32_t* grid_cols,
                            int32_t* grid_rows) {
  return guarded_out([&] {
    require(path != nullptr, "path is null");
    const auto gray = img::gray_levels(img::read_image(path));
    const auto map = img::entropy_map(gray, patch_size);
    if (grid_cols) *grid_cols = gray.width / patch_size;
    if (grid_rows) *grid_rows = gray.height / patch_size;
    copy_out(map.values, values, capacity, count);
  });
}

vfo_status vfo_config_default(vfo_config** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = new vfo_config{};
  });
}

vfo_status vfo_config_load(const char* path, vfo_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    auto cfg = app::load_config(path);
    *out = new vfo_config{std::move(cfg)};
  });
}

vfo_status vfo_config_set(vfo_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg && key && value, "null argument");
    app::apply_setting(cfg->cfg, key, value);
  });
}

vfo_status vfo_config_get(const vfo_config* cfg, const char* key, char* buf, size_t capacity,
                          size_t* length) {
  return guarded_out([&] {
    require(cfg && key, "null argument");
    const auto all = kv::KeyValues::parse(app::format_config(cfg->cfg), "config");
    copy_text(all.get(key), buf, capacity, length);
  });
}

void vfo_config_free(vfo_config* cfg) { delete cfg; }

vfo_status vfo_session_create(const vfo_config* cfg, vfo_session** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    *out = new vfo_session(cfg->cfg);
  });
}

void vfo_session_free(vfo_session* session) { delete session; }

size_t vfo_session_sample_count(const vfo_session* session) {
  return session ? session->session.sample_count() : 0;
}

int32_t vfo_session_lm_layers(const vfo_session* session) {
  return session ? session->session.config().model.lm_layers : 0;
}

vfo_status vfo_session_optimize(vfo_session* session, const char* ledger_path,
                                const char* resume_path, vfo_run** out) {
  return guarded([&] {
    require(session && out, "null argument");
    auto run = std::make_unique<vfo_run>();
    run->run = session->session.optimize(ledger_path ? ledger_path : "",
                                         resume_path ? resume_path : "");
    run->incumbent = session->session.record_for(run->run);
    *out = run.release();
  });
}

vfo_status vfo_session_evaluate(vfo_session* session, const vfo_strategy_record* rec,
                                double* sims, size_t capacity, size_t* count, double* total) {
  return guarded_out([&] {
    require(session != nullptr, "null session");
    const auto r = feasible_record(rec);
    const auto report = session->session.evaluator_for(r).evaluate(r.strategy);
    if (total) *total = report.total;
    copy_out(report.per_sample_sim, sims, capacity, count);
  });
}

vfo_status vfo_session_flow(vfo_session* session, size_t sample, const vfo_strategy_record* rec,
                            double* series, size_t capacity, size_t* count) {
  return guarded_out([&] {
    require(session != nullptr, "null session");
    const auto r = feasible_record(rec);
    const auto s = session->session.evaluator_for(r).flow_divergence(sample, r.strategy);
    copy_out(s, series, capacity, count);
  });
}

vfo_status vfo_session_prune(vfo_session* session, size_t sample, const vfo_strategy_record* rec,
                             vfo_prune_report** out) {
  return guarded([&] {
    require(session && out, "null argument");
    const auto r = feasible_record(rec);
    const auto& vision = session->session.evaluator().vision(sample);
    *out = new vfo_prune_report{
        app::prune_report(vision.attention, vision.entropy, vision.grid_cols, r)};
  });
}

vfo_status vfo_session_record_trace(vfo_session* session, size_t sample,
                                    const vfo_strategy_record* rec, const char* dir) {
  return guarded([&] {
    require(session && dir, "null argument");
    if (rec == nullptr) {
      toy::record_trace(session->session.evaluator().full_trace(sample), dir);
      return;
    }
    const auto r = feasible_record(rec);
    toy::record_trace(session->session.evaluator_for(r).pruned_trace(sample, r.strategy), dir);
  });
}

size_t vfo_run_size(const vfo_run* run) { return run ? run->run.history.size() : 0; }

vfo_status vfo_run_observation(const vfo_run* run, size_t index, vfo_strategy* s, double* y) {
  return guarded([&] {
    require(run != nullptr, "null run");
    require(index < run->run.history.size(), "observation index out of range");
    if (s) *s = from_strategy(run->run.history[index].strategy);
    if (y) *y = run->run.history[index].y;
  });
}

vfo_status vfo_run_incumbent(const vfo_run* run, vfo_strategy_record* rec, size_t* index) {
  return guarded([&] {
    require(run && rec, "null argument");
    *rec = from_record(run->incumbent);
    if (index) *index = run->run.incumbent;
  });
}

void vfo_run_free(vfo_run* run) { delete run; }

vfo_status vfo_strategy_write(const char* path, const vfo_strategy_record* rec) {
  return guarded([&] {
    require(path != nullptr, "path is null");
    app::write_strategy(path, to_record(rec));
  });
}

vfo_status vfo_strategy_read(const char* path, vfo_strategy_record* rec) {
  return guarded([&] {
    require(path && rec, "null argument");
    *rec = from_record(app::read_strategy(path));
  });
}

vfo_status vfo_trace_prune(const char* trace_dir, const char* image_path, int32_t patch_size,
                           const vfo_strategy_record* rec, vfo_prune_report** out) {
  return guarded([&] {
    require(trace_dir && out, "null argument");
    const auto r = feasible_record(rec);
    const auto trace = toy::load_trace(trace_dir);
    img::EntropyMap entropy;
    if (!trace.entropy.empty()) {
      entropy.values = trace.entropy;
    } else if (image_path != nullptr) {
      entropy = img::entropy_map(img::gray_levels(img::read_image(image_path)), patch_size);
    } else if (r.strategy.alpha == 0.0 || !r.ablation.calibration) {
      entropy.values.assign(trace.visual_tokens, 0.0);
    } else {
      fail(ErrorKind::io, "trace has no entropy map and no image was given");
    }
    *out = new vfo_prune_report{app::prune_report(trace.attention, entropy, trace.grid_cols, r)};
  });
}

vfo_status vfo_trace_objective(const char* dir, double* sims, size_t capacity, size_t* count,
                               double* total) {
  return guarded_out([&] {
    require(dir != nullptr, "dir is null");
    const auto report = toy::trace_objective(dir);
    if (total) *total = report.total;
    copy_out(report.per_sample_sim, sims, capacity, count);
  });
}

vfo_status vfo_prune_report_importance(const vfo_prune_report* r, double* scores,
                                       size_t capacity, size_t* count) {
  return guarded_out([&] {
    require(r != nullptr, "null report");
    copy_out(r->report.importance, scores, capacity, count);
  });
}

vfo_status vfo_prune_report_list(const vfo_prune_report* r, int32_t stage, vfo_token_list list,
                                 int64_t* ids, size_t capacity, size_t* count) {
  return guarded_out([&] {
    require(r != nullptr, "null report");
    require(stage >= 0 && stage < 3, "stage must be 0, 1 or 2");
    const auto& lists = r->report.stages[static_cast<std::size_t>(stage)];
    switch (list) {
      case VFO_LIST_RETAINED: copy_out(lists.retained, ids, capacity, count); return;
      case VFO_LIST_PRUNED: copy_out(lists.pruned, ids, capacity, count); return;
      case VFO_LIST_MERGED: copy_out(lists.merged, ids, capacity, count); return;
    }
    fail(ErrorKind::argument, "unknown token list");
  });
}

void vfo_prune_report_free(vfo_prune_report* r) { delete r; }

vfo_status vfo_pipeline_costs(int64_t n_visual, int64_t n_text, const vfo_strategy_record* rec,
                              vfo_model_dims dims, const int64_t* merged_counts,
                              vfo_cost_report* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    const auto r = feasible_record(rec);
    const cost::ModelDims d{r.layout.total(), dims.hidden, dims.ffn, dims.heads,
                            dims.bytes_per_value};
    std::array<std::int64_t, 3> merged{0, 0, 0};
    if (merged_counts) std::copy(merged_counts, merged_counts + 3, merged.begin());
    auto report = cost::pipeline_costs(n_visual, n_text, r.strategy, r.layout, d, merged);
    report.budget = r.budget.r_bar;
    *out = {report.budget,          report.flops_total,     report.flops_baseline,
            report.kv_bytes_total,  report.kv_bytes_baseline, report.flops_reduction,
            report.kv_reduction};
  });
}

vfo_status vfo_cost_csv_header(char* buf, size_t capacity, size_t* length) {
  return guarded_out([&] { copy_text(cost::csv_header(), buf, capacity, length); });
}

vfo_status vfo_cost_csv_row(const vfo_cost_report* report, char* buf, size_t capacity,
                            size_t* length) {
  return guarded_out([&] {
    require(report != nullptr, "null report");
    cost::CostReport r;
    r.budget = report->budget;
    r.flops_total = report->flops_total;
    r.flops_baseline = report->flops_baseline;
    r.kv_bytes_total = report->kv_bytes_total;
    r.kv_bytes_baseline = report->kv_bytes_baseline;
    r.flops_reduction = report->flops_reduction;
    r.kv_reduction = report->kv_reduction;
    copy_text(cost::csv_row(r), buf, capacity, length);
  });
}

}  // extern "C"
