#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace vflow::prune {

struct GridCoord {
  int x = 0;
  int y = 0;
  bool operator==(const GridCoord&) const = default;
};

struct Token {
  std::int64_t position_id = 0;
  GridCoord coord;
  std::vector<float> rep;  // may be empty when only ids matter
  double importance = 0.0;

  bool operator==(const Token&) const = default;
};

/// Tokens kept in ascending position_id order.
struct TokenSet {
  std::vector<Token> tokens;
  int grid_cols = 0;
  int grid_rows = 0;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::int64_t> position_ids() const;
};

struct PruneOutcome {
  TokenSet retained;  // includes fused tokens when recycling ran
  TokenSet pruned;
  std::vector<Token> merged;
  std::size_t nominal_count = 0;  // k
  std::size_t actual_count = 0;   // |retained|
  std::size_t unweighted_cells = 0;
};

using CellKey = std::pair<int, int>;  // (floor(x/a), floor(y/a))
using CellMap = std::map<CellKey, std::vector<Token>>;

/// Keeps the k most important tokens (smaller position_id wins ties).
PruneOutcome topk_retain(const TokenSet& ts, std::size_t k);

CellMap assign_grid_cells(const TokenSet& pruned, int a);

struct MergeResult {
  std::vector<Token> fused;  // ascending position_id
  std::size_t unweighted_cells = 0;
};

/// Importance-weighted mean per cell, placed at the cell's most important
/// token and inheriting its importance. A cell whose importances are all
/// zero falls back to the plain mean.
MergeResult merge_recycle(const CellMap& cells);

/// topk_retain, then optionally recycle the pruned tokens into retained.
PruneOutcome apply_stage_prune(const TokenSet& ts, std::size_t k, bool recycle, int a);

}  // namespace vflow::prune
