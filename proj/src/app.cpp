#include "app.hpp"

#include <fstream>
#include <functional>
#include <limits>

#include "json.hpp"
#include <sstream>

#include "error.hpp"
#include "kvfile.hpp"
#include "pruner.hpp"

namespace vflow::app {
namespace {

namespace fs = std::filesystem;
using kv::format_double;

struct ConfigField {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

int to_int(const std::string& v, const std::string& key) {
  const auto x = kv::parse_int(v, key);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    fail(ErrorKind::config, "field '" + key + "': out of range");
  }
  return static_cast<int>(x);
}

schedule::StageLayout parse_layout(const std::string& v) {
  std::vector<int> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(to_int(item, "layout"));
  if (parts.size() != 3) fail(ErrorKind::config, "field 'layout': expected three comma-separated counts");
  return {parts[0], parts[1], parts[2]};
}

std::string format_layout(const schedule::StageLayout& l) {
  return std::to_string(l.l1) + "," + std::to_string(l.l2) + "," + std::to_string(l.l3);
}

#define VFO_INT_FIELD(name, member) \
  {name, [](RunConfig& c, const std::string& v) { c.member = to_int(v, name); }, \
   [](const RunConfig& c) { return std::to_string(c.member); }}
#define VFO_DOUBLE_FIELD(name, member) \
  {name, [](RunConfig& c, const std::string& v) { c.member = kv::parse_double(v, name); }, \
   [](const RunConfig& c) { return format_double(c.member); }}
#define VFO_UINT_FIELD(name, member) \
  {name, [](RunConfig& c, const std::string& v) { c.member = kv::parse_uint(v, name); }, \
   [](const RunConfig& c) { return std::to_string(c.member); }}
#define VFO_BOOL_FIELD(name, member) \
  {name, [](RunConfig& c, const std::string& v) { c.member = kv::parse_bool(v, name); }, \
   [](const RunConfig& c) { return std::string(c.member ? "1" : "0"); }}
#define VFO_STRING_FIELD(name, member) \
  {name, [](RunConfig& c, const std::string& v) { c.member = v; }, \
   [](const RunConfig& c) { return c.member; }}

const std::vector<ConfigField>& fields() {
  static const std::vector<ConfigField> table = {
      VFO_INT_FIELD("hidden_dim", model.hidden_dim),
      VFO_INT_FIELD("vit_layers", model.vit_layers),
      VFO_INT_FIELD("lm_layers", model.lm_layers),
      VFO_INT_FIELD("heads", model.heads),
      VFO_INT_FIELD("ffn_dim", model.ffn_dim),
      VFO_INT_FIELD("text_len", model.text_len),
      VFO_INT_FIELD("patch_size", model.patch_size),
      VFO_UINT_FIELD("model_seed", model.seed),
      VFO_INT_FIELD("samples", samples),
      VFO_INT_FIELD("image_size", image_size),
      VFO_UINT_FIELD("workload_seed", workload_seed),
      VFO_STRING_FIELD("image_dir", image_dir),
      {"layout", [](RunConfig& c, const std::string& v) { c.layout = parse_layout(v); },
       [](const RunConfig& c) { return format_layout(c.layout); }},
      VFO_DOUBLE_FIELD("budget", budget.r_bar),
      VFO_DOUBLE_FIELD("r1_min", bounds.r1_min),
      VFO_DOUBLE_FIELD("r1_max", bounds.r1_max),
      VFO_DOUBLE_FIELD("r2_min", bounds.r2_min),
      VFO_DOUBLE_FIELD("r2_max", bounds.r2_max),
      VFO_DOUBLE_FIELD("t_min", bounds.t_min),
      VFO_DOUBLE_FIELD("t_max", bounds.t_max),
      VFO_DOUBLE_FIELD("alpha_min", bounds.alpha_min),
      VFO_DOUBLE_FIELD("alpha_max", bounds.alpha_max),
      VFO_INT_FIELD("a_min", bounds.a_min),
      VFO_INT_FIELD("a_max", bounds.a_max),
      VFO_INT_FIELD("iterations", search.evaluations),
      VFO_INT_FIELD("init", search.init_count),
      VFO_UINT_FIELD("seed", search.seed),
      VFO_DOUBLE_FIELD("xi", search.xi),
      VFO_INT_FIELD("candidates", search.candidates),
      VFO_BOOL_FIELD("calibration", ablation.calibration),
      VFO_BOOL_FIELD("merge", ablation.merge),
      VFO_BOOL_FIELD("progressive", ablation.progressive),
      VFO_STRING_FIELD("out", out_dir),
      VFO_STRING_FIELD("traces", traces_dir),
  };
  return table;
}

#undef VFO_INT_FIELD
#undef VFO_DOUBLE_FIELD
#undef VFO_UINT_FIELD
#undef VFO_BOOL_FIELD
#undef VFO_STRING_FIELD

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

RunConfig load_config(const fs::path& path) {
  const auto values = kv::KeyValues::read(path);
  RunConfig cfg;
  for (const auto& [key, value] : values.entries()) apply_setting(cfg, key, value);
  if (!cfg.image_dir.empty() && fs::path(cfg.image_dir).is_relative()) {
    cfg.image_dir = (path.parent_path() / cfg.image_dir).string();
  }
  validate(cfg);
  return cfg;
}

void validate(const RunConfig& cfg) {
  toy::validate(cfg.model);
  schedule::validate(cfg.layout);
  schedule::validate(cfg.bounds);
  if (cfg.layout.total() != cfg.model.lm_layers) {
    fail(ErrorKind::config, "layout " + format_layout(cfg.layout) + " does not cover lm_layers " +
                                std::to_string(cfg.model.lm_layers));
  }
  if (!(cfg.budget.r_bar > 0.0 && cfg.budget.r_bar <= 1.0)) {
    fail(ErrorKind::config, "budget must lie in (0, 1]");
  }
  if (cfg.samples < 1 && cfg.image_dir.empty()) fail(ErrorKind::config, "samples must be >= 1");
  if (cfg.search.evaluations < 1 || cfg.search.init_count < 2) {
    fail(ErrorKind::config, "need iterations >= 1 and init >= 2");
  }
  if (cfg.search.candidates < 1 || cfg.search.xi < 0.0) {
    fail(ErrorKind::config, "need candidates >= 1 and xi >= 0");
  }
  if (!cfg.image_dir.empty() && !fs::is_directory(cfg.image_dir)) {
    fail(ErrorKind::io, "image directory not found: " + cfg.image_dir);
  }
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
  return out;
}

std::string format_strategy(const StrategyRecord& rec) {
  std::ostringstream o;
  o << "# vflowopt pruning strategy\n"
    << "version=" << rec.version << "\n"
    << "r1=" << format_double(rec.strategy.r1) << "\n"
    << "r2=" << format_double(rec.strategy.r2) << "\n"
    << "r3=" << format_double(rec.strategy.r3) << "\n"
    << "t=" << format_double(rec.strategy.t) << "\n"
    << "alpha=" << format_double(rec.strategy.alpha) << "\n"
    << "a=" << rec.strategy.a << "\n"
    << "layout=" << format_layout(rec.layout) << "\n"
    << "budget=" << format_double(rec.budget.r_bar) << "\n"
    << "objective=" << format_double(rec.objective) << "\n"
    << "seed=" << rec.seed << "\n"
    << "calibration=" << (rec.ablation.calibration ? 1 : 0) << "\n"
    << "merge=" << (rec.ablation.merge ? 1 : 0) << "\n"
    << "progressive=" << (rec.ablation.progressive ? 1 : 0) << "\n";
  return o.str();
}

StrategyRecord parse_strategy(const std::string& text, const std::string& source) {
  const auto v = kv::KeyValues::parse(text, source);
  StrategyRecord rec;
  rec.version = v.get("version");
  rec.strategy.r1 = v.get_double("r1");
  rec.strategy.r2 = v.get_double("r2");
  rec.strategy.r3 = v.get_double("r3");
  rec.strategy.t = v.get_double("t");
  rec.strategy.alpha = v.get_double("alpha");
  rec.strategy.a = to_int(v.get("a"), "a");
  rec.layout = parse_layout(v.get("layout"));
  rec.budget.r_bar = v.get_double("budget");
  rec.objective = v.get_double("objective");
  rec.seed = v.get_uint("seed");
  if (v.has("calibration")) rec.ablation.calibration = kv::parse_bool(v.get("calibration"), "calibration");
  if (v.has("merge")) rec.ablation.merge = kv::parse_bool(v.get("merge"), "merge");
  if (v.has("progressive")) rec.ablation.progressive = kv::parse_bool(v.get("progressive"), "progressive");
  schedule::require_feasible(rec.strategy, rec.layout, rec.budget);
  return rec;
}

void write_strategy(const fs::path& path, const StrategyRecord& rec) {
  schedule::require_feasible(rec.strategy, rec.layout, rec.budget);
  kv::write_atomic(path, format_strategy(rec));
}

StrategyRecord read_strategy(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::io, "strategy file not found: " + path.string());
  const auto bytes = kv::read_bytes(path);
  return parse_strategy(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string ledger_line(std::size_t index, const bo::Observation& obs) {
  nlohmann::ordered_json j;
  j["index"] = index;
  j["timestamp"] = index;  // logical clock: evaluation order
  j["x"] = obs.x;
  j["strategy"] = {{"r1", obs.strategy.r1}, {"r2", obs.strategy.r2}, {"r3", obs.strategy.r3},
                   {"t", obs.strategy.t},   {"alpha", obs.strategy.alpha}, {"a", obs.strategy.a}};
  j["y"] = obs.y;
  return j.dump();
}

std::vector<bo::Observation> read_ledger(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open ledger " + path.string());
  std::vector<bo::Observation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      bo::Observation o;
      o.x = j.at("x").get<std::vector<double>>();
      const auto& s = j.at("strategy");
      o.strategy = {s.at("r1").get<double>(), s.at("r2").get<double>(), s.at("r3").get<double>(),
                    s.at("t").get<double>(),  s.at("alpha").get<double>(), s.at("a").get<int>()};
      o.y = j.at("y").get<double>();
      out.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

PruneReport prune_report(const importance::AttentionMap& attention,
                         const img::EntropyMap& entropy, int grid_cols,
                         const StrategyRecord& rec) {
  if (grid_cols <= 0 || attention.n % static_cast<std::size_t>(grid_cols) != 0) {
    fail(ErrorKind::shape, "prune report: grid width does not divide the token count");
  }
  PruneReport report;
  const importance::ImportanceParams params{rec.strategy.t, rec.strategy.alpha};
  report.importance =
      importance::score_tokens(attention, entropy, params, rec.ablation.calibration).scores;

  prune::TokenSet current;
  current.grid_cols = grid_cols;
  current.grid_rows = static_cast<int>(attention.n) / grid_cols;
  for (std::size_t i = 0; i < attention.n; ++i) {
    prune::Token t;
    t.position_id = static_cast<std::int64_t>(i);
    t.coord = {static_cast<int>(i) % grid_cols, static_cast<int>(i) / grid_cols};
    t.importance = report.importance[i];
    current.tokens.push_back(t);
  }
  const auto counts = schedule::stage_token_counts(attention.n, rec.strategy);
  for (std::size_t stage = 0; stage < 3; ++stage) {
    const std::size_t k = std::min(counts[stage], current.size());
    const bool recycle = stage == 0 && rec.ablation.merge;
    const prune::PruneOutcome out = prune::apply_stage_prune(current, k, recycle, rec.strategy.a);
    report.stages[stage].retained = out.retained.position_ids();
    report.stages[stage].pruned = out.pruned.position_ids();
    for (const auto& t : out.merged) report.stages[stage].merged.push_back(t.position_id);
    current = out.retained;
  }
  return report;
}

Session::Session(RunConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  model_ = std::make_unique<toy::ToyModel>(cfg_.model);
  auto samples = cfg_.image_dir.empty()
                     ? toy::synthetic_workload(static_cast<std::size_t>(cfg_.samples),
                                               cfg_.image_size, cfg_.model.patch_size,
                                               cfg_.workload_seed)
                     : toy::image_workload(cfg_.image_dir, cfg_.model.patch_size,
                                           cfg_.workload_seed);
  evaluator_ = std::make_unique<toy::FlowEvaluator>(*model_, std::move(samples), cfg_.layout,
                                                    cfg_.ablation);
}

bo::SearchSpace Session::space() const {
  bo::SearchSpace space{cfg_.bounds, cfg_.layout, cfg_.budget};
  return cfg_.ablation.progressive ? space : bo::single_stage_space(space);
}

const toy::FlowEvaluator& Session::evaluator_for(const StrategyRecord& rec) {
  evaluator_->set_layout(rec.layout);
  evaluator_->set_ablation(rec.ablation);
  return *evaluator_;
}

bo::OptimizationRun Session::optimize(const std::string& ledger_path,
                                      const std::string& resume_path) {
  evaluator_->set_layout(cfg_.layout);
  evaluator_->set_ablation(cfg_.ablation);
  std::vector<bo::Observation> replay;
  if (!resume_path.empty()) replay = read_ledger(resume_path);

  std::ofstream ledger;
  if (!ledger_path.empty()) {
    ledger.open(ledger_path, std::ios::trunc);
    if (!ledger) fail(ErrorKind::io, "cannot write ledger " + ledger_path);
  }
  return bo::optimize(*evaluator_, space(), cfg_.search, replay,
                      [&](std::size_t idx, const bo::Observation& obs) {
                        if (ledger.is_open()) ledger << ledger_line(idx, obs) << "\n" << std::flush;
                      });
}

StrategyRecord Session::record_for(const bo::OptimizationRun& run) const {
  StrategyRecord rec;
  rec.strategy = run.best().strategy;
  rec.layout = cfg_.layout;
  rec.budget = cfg_.budget;
  rec.objective = run.best().y;
  rec.seed = run.seed;
  rec.ablation = cfg_.ablation;
  return rec;
}

}  // namespace vflow::app
