#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bayesopt.hpp"
#include "schedule.hpp"
#include "toylmm.hpp"

namespace vflow::app {

inline constexpr const char* kVersion = "0.1.0";

/// Everything a reproducible run depends on. Loaded from a key=value file;
/// any key may also be overridden individually.
struct RunConfig {
  toy::ToyModelConfig model;

  // Workload: synthetic images unless image_dir is set.
  int samples = 30;
  int image_size = 32;
  std::uint64_t workload_seed = 2024;
  std::string image_dir;

  schedule::StrategyBounds bounds;
  schedule::StageLayout layout;
  schedule::Budget budget{0.25};
  bo::BoSettings search;
  toy::Ablation ablation;

  std::string out_dir = "vflowopt-out";
  std::string traces_dir;
};

/// Known keys, one per line, for help output.
std::vector<std::string> config_keys();

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig load_config(const std::filesystem::path& path);
void validate(const RunConfig& cfg);
std::string format_config(const RunConfig& cfg);

/// A persisted strategy together with the context it was optimized for.
struct StrategyRecord {
  schedule::PruningStrategy strategy;
  schedule::StageLayout layout;
  schedule::Budget budget{1.0};
  double objective = 0.0;
  std::uint64_t seed = 0;
  toy::Ablation ablation;
  std::string version = kVersion;
};

std::string format_strategy(const StrategyRecord& rec);
/// Parses and re-validates feasibility under the recorded layout and budget.
StrategyRecord parse_strategy(const std::string& text, const std::string& source);
void write_strategy(const std::filesystem::path& path, const StrategyRecord& rec);
StrategyRecord read_strategy(const std::filesystem::path& path);

/// One JSON object per line: index, logical timestamp, normalized x,
/// realized strategy and objective value.
std::string ledger_line(std::size_t index, const bo::Observation& obs);
std::vector<bo::Observation> read_ledger(const std::filesystem::path& path);

struct StageLists {
  std::vector<std::int64_t> retained;
  std::vector<std::int64_t> pruned;
  std::vector<std::int64_t> merged;
};

/// Which position ids each stage keeps, drops and fuses, mirroring the
/// decoder's pruning without running it.
struct PruneReport {
  std::vector<double> importance;
  std::array<StageLists, 3> stages;
};

PruneReport prune_report(const importance::AttentionMap& attention,
                         const img::EntropyMap& entropy, int grid_cols,
                         const StrategyRecord& rec);

/// Model, prepared workload and search space built from one RunConfig.
class Session {
 public:
  explicit Session(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const toy::ToyModel& model() const { return *model_; }
  bo::SearchSpace space() const;
  std::size_t sample_count() const { return evaluator_->size(); }

  /// Evaluator configured for a strategy record's layout and ablation.
  const toy::FlowEvaluator& evaluator_for(const StrategyRecord& rec);
  const toy::FlowEvaluator& evaluator() const { return *evaluator_; }

  /// Runs the search. Each observation is appended to ledger_path (when
  /// set) as it happens; resume_path replays an earlier ledger.
  bo::OptimizationRun optimize(const std::string& ledger_path, const std::string& resume_path);

  StrategyRecord record_for(const bo::OptimizationRun& run) const;

 private:
  RunConfig cfg_;
  std::unique_ptr<toy::ToyModel> model_;
  std::unique_ptr<toy::FlowEvaluator> evaluator_;
};

}  // namespace vflow::app
