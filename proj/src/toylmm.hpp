#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "imgproc.hpp"
#include "importance.hpp"
#include "schedule.hpp"

namespace vflow::toy {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ToyModelConfig {
  int hidden_dim = 32;
  int vit_layers = 2;
  int lm_layers = 12;
  int heads = 4;
  int ffn_dim = 128;
  int text_len = 8;
  int patch_size = 4;
  std::uint64_t seed = 1234;

  bool operator==(const ToyModelConfig&) const = default;
};

void validate(const ToyModelConfig& cfg);

struct WorkloadSample {
  img::ImageBuffer image;
  int patch_size = 4;
  std::uint64_t text_seed = 0;
};

/// Component toggles for ablation runs.
struct Ablation {
  bool calibration = true;  // false: mean received attention
  bool merge = true;        // false: pruned tokens are dropped
  bool progressive = true;  // false: one pre-LM prune to the budget

  bool operator==(const Ablation&) const = default;
};

/// Per-layer record of one language-model pass. per_layer_hidden[l] holds
/// the output of layer l for every surviving sequence position, visual rows
/// first, then text rows; per_layer_positions[l] carries their position ids.
struct FlowTrace {
  importance::AttentionMap attention;
  std::vector<double> entropy;  // optional; empty when not recorded
  int grid_cols = 0;
  int grid_rows = 0;
  std::size_t visual_tokens = 0;
  std::size_t text_tokens = 0;
  std::vector<Matrix> per_layer_hidden;
  std::vector<std::vector<std::int64_t>> per_layer_positions;
  std::vector<float> final_token;

  std::size_t hidden_dim() const { return final_token.size(); }
  bool operator==(const FlowTrace& other) const;
};

/// Vision-encoder output feeding the language model.
struct VisionOutput {
  Matrix tokens;  // N x d, already projected into the LM width
  importance::AttentionMap attention;
  img::EntropyMap entropy;
  int grid_cols = 0;
  int grid_rows = 0;
};

struct ObjectiveReport {
  std::vector<double> per_sample_sim;
  double total = 0.0;
};

/// Everything the LM needs to prune on the way through.
struct PrunePlan {
  schedule::PruningStrategy strategy;
  schedule::StageLayout layout;
  importance::ImportanceMap importance;
  bool recycle = true;
};

/// Deterministic toy LMM: a bidirectional ViT over gray patches feeding a
/// causal decoder over [visual || text]. Pre-norm blocks, GELU FFN, no final
/// norm; all weights are U(-1/sqrt(d), 1/sqrt(d)) from the counter PRNG.
class ToyModel {
 public:
  explicit ToyModel(const ToyModelConfig& cfg);

  const ToyModelConfig& config() const { return cfg_; }

  VisionOutput encode(const WorkloadSample& sample) const;
  Matrix text_embeddings(std::uint64_t text_seed) const;

  /// Runs the decoder; plan == nullptr means no pruning at all.
  FlowTrace run_language(const VisionOutput& vision, const Matrix& text,
                         const PrunePlan* plan) const;

 private:
  struct Block {
    Matrix wq, wk, wv, wo, w1, w2;
  };

  Matrix attend(const Block& b, const Matrix& x, bool causal,
                Matrix* head_mean) const;
  void apply_block(const Block& b, Matrix& h, bool causal, Matrix* head_mean) const;

  ToyModelConfig cfg_;
  Matrix patch_embed_;
  Matrix projector_;
  std::vector<Block> vit_;
  std::vector<Block> lm_;
};

ToyModel build_model(const ToyModelConfig& cfg);

FlowTrace forward_full(const ToyModel& model, const WorkloadSample& sample);

FlowTrace forward_pruned(const ToyModel& model, const WorkloadSample& sample,
                         const schedule::PruningStrategy& s,
                         const schedule::StageLayout& layout,
                         const importance::ImportanceMap& importance,
                         bool recycle = true);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Caches the encoder output and the unpruned run of every sample so that
/// each strategy evaluation only pays for the pruned decoder passes.
class FlowEvaluator {
 public:
  FlowEvaluator(const ToyModel& model, std::vector<WorkloadSample> samples,
                schedule::StageLayout layout, Ablation ablation = {});

  std::size_t size() const { return prepared_.size(); }
  const schedule::StageLayout& layout() const { return layout_; }
  const Ablation& ablation() const { return ablation_; }
  const ToyModel& model() const { return *model_; }

  void set_ablation(Ablation ablation) { ablation_ = ablation; }
  void set_layout(const schedule::StageLayout& layout);

  importance::ImportanceMap importance_for(std::size_t sample,
                                           const schedule::PruningStrategy& s) const;
  const FlowTrace& full_trace(std::size_t sample) const;
  const VisionOutput& vision(std::size_t sample) const;
  FlowTrace pruned_trace(std::size_t sample, const schedule::PruningStrategy& s) const;

  ObjectiveReport evaluate(const schedule::PruningStrategy& s) const;

  /// Mean cosine similarity between full and pruned hidden states over the
  /// text positions, one value per LM layer.
  std::vector<double> flow_divergence(std::size_t sample,
                                      const schedule::PruningStrategy& s) const;

 private:
  struct Prepared {
    VisionOutput vision;
    Matrix text;
    FlowTrace full;
  };

  const ToyModel* model_;
  schedule::StageLayout layout_;
  Ablation ablation_;
  std::vector<Prepared> prepared_;
};

ObjectiveReport objective(const ToyModel& model, std::span<const WorkloadSample> samples,
                          const schedule::PruningStrategy& s,
                          const schedule::StageLayout& layout, Ablation ablation = {});

std::vector<double> flow_divergence(const ToyModel& model, const WorkloadSample& sample,
                                    const schedule::PruningStrategy& s,
                                    const schedule::StageLayout& layout,
                                    Ablation ablation = {});

/// Per-text-position cosine similarity averaged, for each layer.
std::vector<double> text_similarity_series(const FlowTrace& full, const FlowTrace& pruned);

/// Seeded synthetic images: flat background, rectangles, a noise blob and a
/// gradient strip, so patch entropy varies across the grid.
std::vector<WorkloadSample> synthetic_workload(std::size_t count, int image_size,
                                               int patch_size, std::uint64_t seed);

/// Every .pgm/.ppm file in dir, sorted by file name.
std::vector<WorkloadSample> image_workload(const std::filesystem::path& dir,
                                           int patch_size, std::uint64_t seed);

// Trace bundles: a directory holding a text `manifest` plus little-endian
// raw blobs (attention.f32, hidden.f32, positions.i64, final.f32 and an
// optional entropy.f64).
void record_trace(const FlowTrace& trace, const std::filesystem::path& dir);

/// expected_hidden_dim == 0 accepts any width.
FlowTrace load_trace(const std::filesystem::path& dir, std::size_t expected_hidden_dim = 0);

/// Trace-driven objective over `sample_*` directories each holding a `full`
/// and a `pruned` bundle, visited in name order.
ObjectiveReport trace_objective(const std::filesystem::path& dir);

}  // namespace vflow::toy
