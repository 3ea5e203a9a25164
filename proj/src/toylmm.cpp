#include "toylmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "error.hpp"
#include "prng.hpp"
#include "pruner.hpp"

namespace vflow::toy {
namespace {

constexpr float kNormEps = 1e-5f;
constexpr float kPositionScale = 0.5f;

// PRNG streams: group in the high bits, then layer, then matrix slot.
constexpr std::uint64_t stream_id(std::uint64_t group, std::uint64_t layer,
                                  std::uint64_t slot) {
  return (group << 32) | (layer << 8) | slot;
}

Matrix uniform_matrix(std::uint64_t seed, std::uint64_t stream, int rows, int cols,
                      float bound) {
  Matrix m(rows, cols);
  std::uint64_t idx = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double u = counter_uniform(seed, stream, idx++);
      m(r, c) = static_cast<float>((2.0 * u - 1.0) * bound);
    }
  }
  return m;
}

void layer_norm_rows(Matrix& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const float mean = row.mean();
    row.array() -= mean;
    const float var = row.squaredNorm() / static_cast<float>(row.size());
    row *= 1.0f / std::sqrt(var + kNormEps);
  }
}

float gelu(float v) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * v * (1.0f + std::tanh(k * (v + 0.044715f * v * v * v)));
}

// Sinusoidal code of a scalar position written into `out` (even: sin, odd: cos).
void sinusoid(double pos, float* out, int width) {
  for (int i = 0; i + 1 < width; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / width);
    out[i] = static_cast<float>(kPositionScale * std::sin(pos * freq));
    out[i + 1] = static_cast<float>(kPositionScale * std::cos(pos * freq));
  }
}

void require_plan_sane(const schedule::PruningStrategy& s) {
  for (double r : {s.r1, s.r2, s.r3}) {
    if (!(r > 0.0 && r <= 1.0)) {
      fail(ErrorKind::infeasible, "forward_pruned: retention ratios must lie in (0, 1]");
    }
  }
  if (s.a < 1) fail(ErrorKind::infeasible, "forward_pruned: grid size must be >= 1");
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace

void validate(const ToyModelConfig& cfg) {
  if (cfg.hidden_dim <= 0 || cfg.vit_layers <= 0 || cfg.lm_layers <= 0 || cfg.heads <= 0 ||
      cfg.ffn_dim <= 0 || cfg.text_len <= 0 || cfg.patch_size <= 0) {
    fail(ErrorKind::config, "toy model: all dimensions must be positive");
  }
  if (cfg.hidden_dim % cfg.heads != 0) {
    fail(ErrorKind::config, "toy model: hidden_dim " + std::to_string(cfg.hidden_dim) +
                                " is not divisible by heads " + std::to_string(cfg.heads));
  }
  if (cfg.hidden_dim % 4 != 0) {
    fail(ErrorKind::config, "toy model: hidden_dim must be a multiple of 4");
  }
}

bool FlowTrace::operator==(const FlowTrace& o) const {
  if (!(attention == o.attention && entropy == o.entropy && grid_cols == o.grid_cols &&
        grid_rows == o.grid_rows && visual_tokens == o.visual_tokens &&
        text_tokens == o.text_tokens && per_layer_positions == o.per_layer_positions &&
        final_token == o.final_token &&
        per_layer_hidden.size() == o.per_layer_hidden.size())) {
    return false;
  }
  for (std::size_t l = 0; l < per_layer_hidden.size(); ++l) {
    if (!same_matrix(per_layer_hidden[l], o.per_layer_hidden[l])) return false;
  }
  return true;
}

ToyModel::ToyModel(const ToyModelConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  const int d = cfg_.hidden_dim;
  const float bound = 1.0f / std::sqrt(static_cast<float>(d));
  const int patch_pixels = cfg_.patch_size * cfg_.patch_size;
  patch_embed_ = uniform_matrix(cfg_.seed, stream_id(1, 0, 0), patch_pixels, d, bound);
  projector_ = uniform_matrix(cfg_.seed, stream_id(2, 0, 0), d, d, bound);

  const auto make_block = [&](std::uint64_t group, std::uint64_t layer) {
    Block b;
    b.wq = uniform_matrix(cfg_.seed, stream_id(group, layer, 0), d, d, bound);
    b.wk = uniform_matrix(cfg_.seed, stream_id(group, layer, 1), d, d, bound);
    b.wv = uniform_matrix(cfg_.seed, stream_id(group, layer, 2), d, d, bound);
    b.wo = uniform_matrix(cfg_.seed, stream_id(group, layer, 3), d, d, bound);
    b.w1 = uniform_matrix(cfg_.seed, stream_id(group, layer, 4), d, cfg_.ffn_dim, bound);
    b.w2 = uniform_matrix(cfg_.seed, stream_id(group, layer, 5), cfg_.ffn_dim, d, bound);
    return b;
  };
  for (int l = 0; l < cfg_.vit_layers; ++l) vit_.push_back(make_block(3, l));
  for (int l = 0; l < cfg_.lm_layers; ++l) lm_.push_back(make_block(4, l));
}

ToyModel build_model(const ToyModelConfig& cfg) { return ToyModel(cfg); }

Matrix ToyModel::attend(const Block& b, const Matrix& x, bool causal,
                        Matrix* head_mean) const {
  const Eigen::Index n = x.rows();
  const int dh = cfg_.hidden_dim / cfg_.heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Matrix q = x * b.wq;
  const Matrix k = x * b.wk;
  const Matrix v = x * b.wv;
  Matrix out(n, cfg_.hidden_dim);
  if (head_mean) head_mean->setZero(n, n);

  for (int h = 0; h < cfg_.heads; ++h) {
    Matrix scores = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    scores *= scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto row = scores.row(i);
      if (causal) {
        for (Eigen::Index j = i + 1; j < n; ++j) row(j) = -std::numeric_limits<float>::infinity();
      }
      const float mx = row.maxCoeff();
      row = (row.array() - mx).exp();
      row /= row.sum();
    }
    out.middleCols(h * dh, dh) = scores * v.middleCols(h * dh, dh);
    if (head_mean) *head_mean += scores;
  }
  if (head_mean) *head_mean /= static_cast<float>(cfg_.heads);
  return out * b.wo;
}

void ToyModel::apply_block(const Block& b, Matrix& h, bool causal, Matrix* head_mean) const {
  Matrix x = h;
  layer_norm_rows(x);
  h += attend(b, x, causal, head_mean);
  x = h;
  layer_norm_rows(x);
  Matrix inner = x * b.w1;
  inner = inner.unaryExpr([](float v) { return gelu(v); });
  h += inner * b.w2;
}

VisionOutput ToyModel::encode(const WorkloadSample& sample) const {
  if (sample.patch_size != cfg_.patch_size) {
    fail(ErrorKind::shape, "toy model: sample patch size " + std::to_string(sample.patch_size) +
                               " differs from model patch size " +
                               std::to_string(cfg_.patch_size));
  }
  const img::ImageBuffer gray = img::gray_levels(sample.image);
  const img::PatchGrid grid = img::partition(gray, cfg_.patch_size);
  const int d = cfg_.hidden_dim;
  const auto n = static_cast<Eigen::Index>(grid.size());

  Matrix pixels(n, cfg_.patch_size * cfg_.patch_size);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& patch = grid.patches[static_cast<std::size_t>(i)];
    for (std::size_t p = 0; p < patch.size(); ++p) {
      pixels(i, static_cast<Eigen::Index>(p)) = static_cast<float>(patch[p]) / 127.5f - 1.0f;
    }
  }
  Matrix h = pixels * patch_embed_;
  std::vector<float> code(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int x = static_cast<int>(i) % grid.cols;
    const int y = static_cast<int>(i) / grid.cols;
    sinusoid(x, code.data(), d / 2);
    sinusoid(y, code.data() + d / 2, d / 2);
    for (int c = 0; c < d; ++c) h(i, c) += code[static_cast<std::size_t>(c)];
  }

  Matrix last_attention;
  for (std::size_t l = 0; l < vit_.size(); ++l) {
    apply_block(vit_[l], h, false, l + 1 == vit_.size() ? &last_attention : nullptr);
  }
  layer_norm_rows(h);

  VisionOutput out;
  out.tokens = h * projector_;
  std::vector<double> weights(last_attention.data(), last_attention.data() + last_attention.size());
  out.attention = importance::AttentionMap(static_cast<std::size_t>(n), std::move(weights));
  out.entropy = img::entropy_map(gray, cfg_.patch_size);
  out.grid_cols = grid.cols;
  out.grid_rows = grid.rows;
  return out;
}

Matrix ToyModel::text_embeddings(std::uint64_t text_seed) const {
  return uniform_matrix(text_seed, stream_id(5, 0, 0), cfg_.text_len, cfg_.hidden_dim, 1.0f);
}

FlowTrace ToyModel::run_language(const VisionOutput& vision, const Matrix& text,
                                 const PrunePlan* plan) const {
  const int d = cfg_.hidden_dim;
  const auto n_visual = static_cast<std::size_t>(vision.tokens.rows());
  const auto n_text = static_cast<std::size_t>(text.rows());
  if (vision.tokens.cols() != d || text.cols() != d) {
    fail(ErrorKind::shape, "toy model: token width does not match hidden_dim");
  }

  prune::TokenSet visual;
  visual.grid_cols = vision.grid_cols;
  visual.grid_rows = vision.grid_rows;
  for (std::size_t i = 0; i < n_visual; ++i) {
    prune::Token t;
    t.position_id = static_cast<std::int64_t>(i);
    t.coord = {static_cast<int>(i) % vision.grid_cols, static_cast<int>(i) / vision.grid_cols};
    const auto row = vision.tokens.row(static_cast<Eigen::Index>(i));
    t.rep.assign(row.data(), row.data() + d);
    visual.tokens.push_back(std::move(t));
  }

  std::array<std::size_t, 3> counts{n_visual, n_visual, n_visual};
  if (plan) {
    require_plan_sane(plan->strategy);
    if (plan->importance.scores.size() != n_visual) {
      fail(ErrorKind::shape, "forward_pruned: importance map has " +
                                 std::to_string(plan->importance.scores.size()) +
                                 " entries for " + std::to_string(n_visual) + " visual tokens");
    }
    if (plan->layout.total() != cfg_.lm_layers) {
      fail(ErrorKind::shape, "forward_pruned: stage layout covers " +
                                 std::to_string(plan->layout.total()) + " layers, model has " +
                                 std::to_string(cfg_.lm_layers));
    }
    for (std::size_t i = 0; i < n_visual; ++i) {
      visual.tokens[i].importance = plan->importance.scores[i];
    }
    counts = schedule::stage_token_counts(n_visual, plan->strategy);
    visual = prune::apply_stage_prune(visual, counts[0], plan->recycle, plan->strategy.a).retained;
  }

  // Sequence state: visual rows first (ascending position id), then text.
  std::vector<prune::Token> meta = visual.tokens;
  for (auto& t : meta) t.rep.clear();
  Matrix h(static_cast<Eigen::Index>(meta.size() + n_text), d);
  std::vector<std::int64_t> positions;
  std::vector<float> code(static_cast<std::size_t>(d));
  for (std::size_t r = 0; r < visual.tokens.size(); ++r) {
    const auto& t = visual.tokens[r];
    sinusoid(static_cast<double>(t.position_id), code.data(), d);
    for (int c = 0; c < d; ++c) {
      h(static_cast<Eigen::Index>(r), c) = t.rep[static_cast<std::size_t>(c)] + code[static_cast<std::size_t>(c)];
    }
    positions.push_back(t.position_id);
  }
  for (std::size_t j = 0; j < n_text; ++j) {
    const auto pos = static_cast<std::int64_t>(n_visual + j);
    sinusoid(static_cast<double>(pos), code.data(), d);
    const auto r = static_cast<Eigen::Index>(meta.size() + j);
    for (int c = 0; c < d; ++c) {
      h(r, c) = text(static_cast<Eigen::Index>(j), c) + code[static_cast<std::size_t>(c)];
    }
    positions.push_back(pos);
  }

  FlowTrace trace;
  trace.attention = vision.attention;
  trace.entropy = vision.entropy.values;
  trace.grid_cols = vision.grid_cols;
  trace.grid_rows = vision.grid_rows;
  trace.visual_tokens = n_visual;
  trace.text_tokens = n_text;

  for (int l = 0; l < cfg_.lm_layers; ++l) {
    if (plan) {
      const int boundary_stage = l == plan->layout.l1                        ? 1
                                 : l == plan->layout.l1 + plan->layout.l2 ? 2
                                                                            : 0;
      const std::size_t k = boundary_stage ? std::min(counts[boundary_stage], meta.size()) : 0;
      if (boundary_stage && k < meta.size()) {
        prune::TokenSet current;
        current.tokens = meta;
        const auto kept = prune::topk_retain(current, k).retained.position_ids();
        std::vector<prune::Token> next_meta;
        Matrix next(static_cast<Eigen::Index>(kept.size() + n_text), d);
        std::vector<std::int64_t> next_positions;
        std::size_t out_row = 0;
        for (std::size_t r = 0; r < meta.size(); ++r) {
          if (!std::binary_search(kept.begin(), kept.end(), meta[r].position_id)) continue;
          next.row(static_cast<Eigen::Index>(out_row++)) = h.row(static_cast<Eigen::Index>(r));
          next_meta.push_back(meta[r]);
          next_positions.push_back(meta[r].position_id);
        }
        next.bottomRows(static_cast<Eigen::Index>(n_text)) = h.bottomRows(static_cast<Eigen::Index>(n_text));
        next_positions.insert(next_positions.end(), positions.end() - static_cast<std::ptrdiff_t>(n_text),
                              positions.end());
        h = std::move(next);
        meta = std::move(next_meta);
        positions = std::move(next_positions);
      }
    }
    apply_block(lm_[static_cast<std::size_t>(l)], h, true, nullptr);
    trace.per_layer_hidden.push_back(h);
    trace.per_layer_positions.push_back(positions);
  }
  const auto last = h.row(h.rows() - 1);
  trace.final_token.assign(last.data(), last.data() + d);
  return trace;
}

FlowTrace forward_full(const ToyModel& model, const WorkloadSample& sample) {
  return model.run_language(model.encode(sample), model.text_embeddings(sample.text_seed), nullptr);
}

FlowTrace forward_pruned(const ToyModel& model, const WorkloadSample& sample,
                         const schedule::PruningStrategy& s,
                         const schedule::StageLayout& layout,
                         const importance::ImportanceMap& importance, bool recycle) {
  const PrunePlan plan{s, layout, importance, recycle};
  return model.run_language(model.encode(sample), model.text_embeddings(sample.text_seed), &plan);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) fail(ErrorKind::shape, "cosine similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::numeric, "cosine similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> text_similarity_series(const FlowTrace& full, const FlowTrace& pruned) {
  if (full.per_layer_hidden.size() != pruned.per_layer_hidden.size() ||
      full.text_tokens != pruned.text_tokens) {
    fail(ErrorKind::shape, "flow divergence: traces differ in depth or text length");
  }
  const auto t = static_cast<Eigen::Index>(full.text_tokens);
  std::vector<double> series;
  for (std::size_t l = 0; l < full.per_layer_hidden.size(); ++l) {
    const Matrix& a = full.per_layer_hidden[l];
    const Matrix& b = pruned.per_layer_hidden[l];
    double sum = 0.0;
    for (Eigen::Index j = 0; j < t; ++j) {
      const auto ra = a.row(a.rows() - t + j);
      const auto rb = b.row(b.rows() - t + j);
      sum += cosine_similarity({ra.data(), static_cast<std::size_t>(ra.size())},
                               {rb.data(), static_cast<std::size_t>(rb.size())});
    }
    series.push_back(t > 0 ? sum / static_cast<double>(t) : 1.0);
  }
  return series;
}

FlowEvaluator::FlowEvaluator(const ToyModel& model, std::vector<WorkloadSample> samples,
                             schedule::StageLayout layout, Ablation ablation)
    : model_(&model), ablation_(ablation) {
  set_layout(layout);
  if (samples.empty()) fail(ErrorKind::argument, "workload: no samples");
  prepared_.reserve(samples.size());
  for (const auto& s : samples) {
    Prepared p;
    p.vision = model.encode(s);
    p.text = model.text_embeddings(s.text_seed);
    p.full = model.run_language(p.vision, p.text, nullptr);
    prepared_.push_back(std::move(p));
  }
}

void FlowEvaluator::set_layout(const schedule::StageLayout& layout) {
  schedule::validate(layout);
  if (layout.total() != model_->config().lm_layers) {
    fail(ErrorKind::config, "stage layout covers " + std::to_string(layout.total()) +
                                " layers but the model has " +
                                std::to_string(model_->config().lm_layers));
  }
  layout_ = layout;
}

importance::ImportanceMap FlowEvaluator::importance_for(std::size_t sample,
                                                        const schedule::PruningStrategy& s) const {
  const auto& v = vision(sample);
  return importance::score_tokens(v.attention, v.entropy, {s.t, s.alpha}, ablation_.calibration);
}

const FlowTrace& FlowEvaluator::full_trace(std::size_t sample) const {
  if (sample >= prepared_.size()) fail(ErrorKind::argument, "sample index out of range");
  return prepared_[sample].full;
}

const VisionOutput& FlowEvaluator::vision(std::size_t sample) const {
  if (sample >= prepared_.size()) fail(ErrorKind::argument, "sample index out of range");
  return prepared_[sample].vision;
}

FlowTrace FlowEvaluator::pruned_trace(std::size_t sample, const schedule::PruningStrategy& s) const {
  const PrunePlan plan{s, layout_, importance_for(sample, s), ablation_.merge};
  return model_->run_language(prepared_[sample].vision, prepared_[sample].text, &plan);
}

ObjectiveReport FlowEvaluator::evaluate(const schedule::PruningStrategy& s) const {
  ObjectiveReport report;
  for (std::size_t i = 0; i < prepared_.size(); ++i) {
    const FlowTrace pruned = pruned_trace(i, s);
    report.per_sample_sim.push_back(
        cosine_similarity(prepared_[i].full.final_token, pruned.final_token));
  }
  for (double v : report.per_sample_sim) report.total += v;
  return report;
}

std::vector<double> FlowEvaluator::flow_divergence(std::size_t sample,
                                                   const schedule::PruningStrategy& s) const {
  return text_similarity_series(full_trace(sample), pruned_trace(sample, s));
}

ObjectiveReport objective(const ToyModel& model, std::span<const WorkloadSample> samples,
                          const schedule::PruningStrategy& s,
                          const schedule::StageLayout& layout, Ablation ablation) {
  const FlowEvaluator eval(model, {samples.begin(), samples.end()}, layout, ablation);
  return eval.evaluate(s);
}

std::vector<double> flow_divergence(const ToyModel& model, const WorkloadSample& sample,
                                    const schedule::PruningStrategy& s,
                                    const schedule::StageLayout& layout, Ablation ablation) {
  const FlowEvaluator eval(model, {sample}, layout, ablation);
  return eval.flow_divergence(0, s);
}

}  // namespace vflow::toy
