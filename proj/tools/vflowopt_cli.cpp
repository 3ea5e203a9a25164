// vflowopt command-line front end. Talks to the library only through the C API.
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vflowopt/vflowopt.h"

namespace fs = std::filesystem;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(vfo_status s) {
  if (s != VFO_OK) {
    throw CliError(std::string(vfo_status_name(s)) + ": " + vfo_last_error());
  }
}

template <typename T, typename F>
std::vector<T> fetch(F&& call) {
  std::size_t count = 0;
  std::vector<T> out;
  vfo_status s = call(nullptr, 0, &count);
  if (s == VFO_ERR_BUFFER || (s == VFO_OK && count > 0)) {
    out.resize(count);
    s = call(out.data(), out.size(), &count);
  }
  check(s);
  out.resize(count);
  return out;
}

std::string text_of(vfo_status (*call)(char*, size_t, size_t*)) {
  std::size_t len = 0;
  call(nullptr, 0, &len);
  std::string buf(len + 1, '\0');
  check(call(buf.data(), buf.size(), &len));
  buf.resize(len);
  return buf;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Temp file plus rename, so readers never see half a file.
void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CliError("cannot write " + tmp.string());
    f << content;
    if (!f.flush()) throw CliError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string traces;
  std::optional<int> samples;
  std::optional<double> budget;
  std::optional<int> iterations;
  std::optional<int> init;
  bool no_calibration = false;
  bool no_merge = false;
  bool uniform_stages = false;
  std::vector<std::string> settings;
};

class Config {
 public:
  explicit Config(const Common& c) {
    check(c.config.empty() ? vfo_config_default(&cfg_) : vfo_config_load(c.config.c_str(), &cfg_));
    for (const auto& kv : c.settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw CliError("--set expects key=value, got '" + kv + "'");
      set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) set("seed", std::to_string(*c.seed));
    if (c.samples) set("samples", std::to_string(*c.samples));
    if (c.budget) set("budget", num(*c.budget));
    if (c.iterations) set("iterations", std::to_string(*c.iterations));
    if (c.init) set("init", std::to_string(*c.init));
    if (!c.out.empty()) set("out", c.out);
    if (!c.traces.empty()) set("traces", c.traces);
    if (c.no_calibration) set("calibration", "0");
    if (c.no_merge) set("merge", "0");
    if (c.uniform_stages) set("progressive", "0");
  }
  ~Config() { vfo_config_free(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  void set(const std::string& key, const std::string& value) {
    check(vfo_config_set(cfg_, key.c_str(), value.c_str()));
  }
  std::string get(const std::string& key) const {
    std::size_t len = 0;
    vfo_config_get(cfg_, key.c_str(), nullptr, 0, &len);
    std::string buf(len + 1, '\0');
    check(vfo_config_get(cfg_, key.c_str(), buf.data(), buf.size(), &len));
    buf.resize(len);
    return buf;
  }
  const vfo_config* get() const { return cfg_; }

 private:
  vfo_config* cfg_ = nullptr;
};

class Session {
 public:
  explicit Session(const Config& cfg) { check(vfo_session_create(cfg.get(), &s_)); }
  ~Session() { vfo_session_free(s_); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;
  vfo_session* get() const { return s_; }

 private:
  vfo_session* s_ = nullptr;
};

vfo_strategy_record load_strategy(const std::string& path, const Common& c) {
  vfo_strategy_record rec{};
  check(vfo_strategy_read(path.c_str(), &rec));
  // Ablation flags can only switch features off relative to the file.
  if (c.no_calibration) rec.ablation.calibration = 0;
  if (c.no_merge) rec.ablation.merge = 0;
  if (c.uniform_stages && rec.ablation.progressive) {
    throw CliError("--uniform-stages needs a strategy optimized with --uniform-stages");
  }
  return rec;
}

// Prints to stdout, or writes <out>/<name> when --out was given.
void emit(const Common& c, const std::string& name, const std::string& content) {
  if (c.out.empty()) {
    std::cout << content;
  } else {
    write_file(fs::path(c.out) / name, content);
  }
}

std::vector<double> evaluate(vfo_session* s, const vfo_strategy_record& rec, double* total) {
  return fetch<double>([&](double* buf, std::size_t cap, std::size_t* n) {
    return vfo_session_evaluate(s, &rec, buf, cap, n, total);
  });
}

std::string similarity_rows(const std::vector<double>& sims, double total) {
  std::ostringstream os;
  os << "sample,similarity\n";
  for (std::size_t i = 0; i < sims.size(); ++i) os << i << "," << num(sims[i]) << "\n";
  os << "total," << num(total) << "\n";
  return os.str();
}

std::string strategy_line(const vfo_strategy& s) {
  return "r1=" + num(s.r1) + " r2=" + num(s.r2) + " r3=" + num(s.r3) + " t=" + num(s.t) +
         " alpha=" + num(s.alpha) + " a=" + std::to_string(s.a);
}

int cmd_optimize(const Common& c, const std::string& resume) {
  Config cfg(c);
  const fs::path out = cfg.get("out");
  fs::create_directories(out);
  Session session(cfg);
  const std::string ledger = (out / "ledger.jsonl").string();
  std::string replay;
  if (!resume.empty()) {
    // The ledger is rewritten as the run replays, so read from a copy.
    replay = (out / "ledger.resume.jsonl").string();
    fs::copy_file(resume, replay, fs::copy_options::overwrite_existing);
  }
  vfo_run* run = nullptr;
  const vfo_status st = vfo_session_optimize(session.get(), ledger.c_str(),
                                             replay.empty() ? nullptr : replay.c_str(), &run);
  if (!replay.empty()) fs::remove(replay);
  check(st);
  vfo_strategy_record best{};
  std::size_t best_index = 0;
  const vfo_status inc = vfo_run_incumbent(run, &best, &best_index);
  const std::size_t evals = vfo_run_size(run);
  vfo_run_free(run);
  check(inc);

  check(vfo_strategy_write((out / "strategy.txt").string().c_str(), &best));
  double total = 0.0;
  const auto sims = evaluate(session.get(), best, &total);
  std::ostringstream os;
  os << "evaluations=" << evals << "\n"
     << "incumbent_index=" << best_index << "\n"
     << "incumbent_f=" << num(best.objective) << "\n"
     << "budget=" << num(best.budget) << "\n"
     << "strategy: " << strategy_line(best.strategy) << "\n"
     << similarity_rows(sims, total);
  write_file(out / "summary.txt", os.str());
  std::cout << os.str();
  return 0;
}

int cmd_eval(const Common& c, const std::string& strategy) {
  Config cfg(c);
  const std::string traces = cfg.get("traces");
  double total = 0.0;
  std::vector<double> sims;
  if (!traces.empty()) {
    sims = fetch<double>([&](double* buf, std::size_t cap, std::size_t* n) {
      return vfo_trace_objective(traces.c_str(), buf, cap, n, &total);
    });
  } else {
    if (strategy.empty()) throw CliError("eval needs a strategy file unless --traces is set");
    const auto rec = load_strategy(strategy, c);
    Session session(cfg);
    sims = evaluate(session.get(), rec, &total);
  }
  emit(c, "eval.csv", similarity_rows(sims, total));
  return 0;
}

std::string join_ids(const std::vector<std::int64_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(ids[i]);
  }
  return s;
}

int cmd_prune(const Common& c, const std::string& strategy, std::size_t sample,
              const std::string& image, int patch_size) {
  Config cfg(c);
  const auto rec = load_strategy(strategy, c);
  const std::string traces = cfg.get("traces");
  vfo_prune_report* report = nullptr;
  if (!traces.empty()) {
    check(vfo_trace_prune(traces.c_str(), image.empty() ? nullptr : image.c_str(), patch_size,
                          &rec, &report));
  } else {
    Session session(cfg);
    check(vfo_session_prune(session.get(), sample, &rec, &report));
  }
  std::ostringstream os;
  try {
    static const char* names[] = {"retained", "pruned", "merged"};
    os << "stage,list,count,position_ids\n";
    for (int stage = 0; stage < 3; ++stage) {
      for (int list = 0; list < 3; ++list) {
        const auto ids = fetch<std::int64_t>([&](std::int64_t* buf, std::size_t cap,
                                                 std::size_t* n) {
          return vfo_prune_report_list(report, stage, static_cast<vfo_token_list>(list), buf, cap,
                                       n);
        });
        os << stage << "," << names[list] << "," << ids.size() << "," << join_ids(ids) << "\n";
      }
    }
    const auto scores = fetch<double>([&](double* buf, std::size_t cap, std::size_t* n) {
      return vfo_prune_report_importance(report, buf, cap, n);
    });
    os << "\ntoken,importance\n";
    for (std::size_t i = 0; i < scores.size(); ++i) os << i << "," << num(scores[i]) << "\n";
  } catch (...) {
    vfo_prune_report_free(report);
    throw;
  }
  vfo_prune_report_free(report);
  emit(c, "prune.csv", os.str());
  return 0;
}

struct CostArgs {
  std::int64_t n_visual = 729;
  std::int64_t n_text = 20;
  vfo_model_dims dims{3584, 18944, 28, 2};
};

int cmd_cost(const Common& c, const std::vector<std::string>& strategies, const CostArgs& a) {
  std::ostringstream os;
  os << text_of(vfo_cost_csv_header) << "\n";
  for (const auto& path : strategies) {
    auto rec = load_strategy(path, c);
    if (c.no_merge) rec.ablation.merge = 0;
    vfo_cost_report report{};
    check(vfo_pipeline_costs(a.n_visual, a.n_text, &rec, a.dims, nullptr, &report));
    std::size_t len = 0;
    vfo_cost_csv_row(&report, nullptr, 0, &len);
    std::string row(len + 1, '\0');
    check(vfo_cost_csv_row(&report, row.data(), row.size(), &len));
    row.resize(len);
    os << row << "\n";
  }
  emit(c, "cost.csv", os.str());
  return 0;
}

int cmd_flow(const Common& c, const std::string& strategy, std::size_t sample) {
  Config cfg(c);
  const auto rec = load_strategy(strategy, c);
  Session session(cfg);
  const auto series = fetch<double>([&](double* buf, std::size_t cap, std::size_t* n) {
    return vfo_session_flow(session.get(), sample, &rec, buf, cap, n);
  });
  std::ostringstream os;
  os << "layer,similarity\n";
  for (std::size_t i = 0; i < series.size(); ++i) os << i << "," << num(series[i]) << "\n";
  emit(c, "flow.csv", os.str());
  return 0;
}

int cmd_entropy(const Common& c, const std::string& image, int patch_size) {
  std::int32_t cols = 0;
  std::int32_t rows = 0;
  const auto values = fetch<double>([&](double* buf, std::size_t cap, std::size_t* n) {
    return vfo_entropy_file(image.c_str(), patch_size, buf, cap, n, &cols, &rows);
  });
  std::ostringstream os;
  os << "index,x,y,entropy\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << i << "," << (static_cast<std::int32_t>(i) % cols) << ","
       << (static_cast<std::int32_t>(i) / cols) << "," << num(values[i]) << "\n";
  }
  emit(c, "entropy.csv", os.str());
  return 0;
}

int cmd_record(const Common& c, const std::string& dir, const std::string& strategy) {
  Config cfg(c);
  Session session(cfg);
  std::optional<vfo_strategy_record> rec;
  if (!strategy.empty()) rec = load_strategy(strategy, c);
  const std::size_t n = vfo_session_sample_count(session.get());
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu", i);
    const fs::path base = fs::path(dir) / name;
    check(vfo_session_record_trace(session.get(), i, nullptr, (base / "full").string().c_str()));
    if (rec) {
      check(vfo_session_record_trace(session.get(), i, &*rec,
                                     (base / "pruned").string().c_str()));
    }
  }
  // One line per bundle, relative to dir, so the listing does not depend on where it was written.
  for (std::size_t i = 0; i < n; ++i) {
    if (rec) {
      std::printf("sample_%03zu/full sample_%03zu/pruned\n", i, i);
    } else {
      std::printf("sample_%03zu/full\n", i);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-token pruning strategy search on a toy multimodal model"};
  app.set_version_flag("--version", vfo_version());
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("--config", c.config, "key=value run configuration file");
  app.add_option("--seed", c.seed, "optimizer seed");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--traces", c.traces, "trace bundle (prune) or directory of sample_* bundles (eval)");
  app.add_option("--samples", c.samples, "number of synthetic workload samples");
  app.add_option("--budget", c.budget, "average retention budget in (0, 1]");
  app.add_option("--iterations", c.iterations, "total objective evaluations");
  app.add_option("--init", c.init, "initial random design size");
  app.add_option("--set", c.settings, "override any config key (key=value)");
  app.add_flag("--no-calibration", c.no_calibration, "rank tokens by mean received attention");
  app.add_flag("--no-merge", c.no_merge, "drop pruned tokens instead of recycling them");
  app.add_flag("--uniform-stages", c.uniform_stages,
               "single pre-LM prune to budget*N with no later pruning (r2 = r3 = 1)");

  std::string resume;
  auto* optimize = app.add_subcommand("optimize", "search for a pruning strategy");
  optimize->add_option("--resume", resume, "replay an earlier ledger before continuing");

  std::string strategy;
  auto* eval = app.add_subcommand("eval", "score a strategy on the workload or recorded traces");
  eval->add_option("strategy", strategy, "strategy file");

  std::size_t sample = 0;
  std::string image;
  int patch_size = 4;
  auto* prune = app.add_subcommand("prune", "per-stage retained, pruned and merged token lists");
  prune->add_option("strategy", strategy, "strategy file")->required();
  prune->add_option("--sample", sample, "workload sample index");
  prune->add_option("--image", image, "image supplying entropies for a trace bundle");
  prune->add_option("--patch-size", patch_size, "patch size for --image");

  std::vector<std::string> strategies;
  CostArgs costs;
  auto* cost = app.add_subcommand("cost", "prefill FLOPs and KV-cache estimates (CSV)");
  cost->add_option("strategies", strategies, "strategy files")->required();
  cost->add_option("--n-visual", costs.n_visual, "visual tokens")->check(CLI::PositiveNumber);
  cost->add_option("--n-text", costs.n_text, "text tokens")->check(CLI::NonNegativeNumber);
  cost->add_option("--hidden", costs.dims.hidden, "LM hidden width");
  cost->add_option("--ffn", costs.dims.ffn, "LM feed-forward width");
  cost->add_option("--heads", costs.dims.heads, "LM attention heads");
  cost->add_option("--bytes", costs.dims.bytes_per_value, "bytes per cached value")
      ->check(CLI::IsMember({2, 4}));

  auto* flow = app.add_subcommand("flow", "per-layer text-token similarity to the unpruned run");
  flow->add_option("strategy", strategy, "strategy file")->required();
  flow->add_option("--sample", sample, "workload sample index");

  auto* entropy = app.add_subcommand("entropy", "per-patch gray-level entropy of a PGM/PPM image");
  entropy->add_option("image", image, "image file")->required();
  entropy->add_option("--patch-size", patch_size, "patch size in pixels");

  std::string record_dir;
  auto* record = app.add_subcommand("record", "write trace bundles for every workload sample");
  record->add_option("dir", record_dir, "destination directory")->required();
  record->add_option("--strategy", strategy, "also record the pruned run of this strategy");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*optimize) return cmd_optimize(c, resume);
    if (*eval) return cmd_eval(c, strategy);
    if (*prune) return cmd_prune(c, strategy, sample, image, patch_size);
    if (*cost) return cmd_cost(c, strategies, costs);
    if (*flow) return cmd_flow(c, strategy, sample);
    if (*entropy) return cmd_entropy(c, image, patch_size);
    if (*record) return cmd_record(c, record_dir, strategy);
  } catch (const std::exception& e) {
    std::cerr << "vflowopt: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
