#include "pruner.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "error.hpp"

namespace vflow::prune {

std::vector<std::int64_t> TokenSet::position_ids() const {
  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(t.position_id);
  return ids;
}

PruneOutcome topk_retain(const TokenSet& ts, std::size_t k) {
  if (k < 1 || k > ts.size()) {
    fail(ErrorKind::argument, "topk_retain: k=" + std::to_string(k) +
                                  " outside [1, " + std::to_string(ts.size()) + "]");
  }
  std::vector<std::size_t> order(ts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    const auto& a = ts.tokens[l];
    const auto& b = ts.tokens[r];
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.position_id < b.position_id;
  });
  std::vector<bool> keep(ts.size(), false);
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = true;

  PruneOutcome out;
  out.retained.grid_cols = out.pruned.grid_cols = ts.grid_cols;
  out.retained.grid_rows = out.pruned.grid_rows = ts.grid_rows;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    (keep[i] ? out.retained : out.pruned).tokens.push_back(ts.tokens[i]);
  }
  out.nominal_count = k;
  out.actual_count = k;
  return out;
}

CellMap assign_grid_cells(const TokenSet& pruned, int a) {
  if (a < 1) fail(ErrorKind::argument, "assign_grid_cells: grid size must be >= 1");
  CellMap cells;
  for (const auto& t : pruned.tokens) {
    cells[{t.coord.x / a, t.coord.y / a}].push_back(t);
  }
  return cells;
}

MergeResult merge_recycle(const CellMap& cells) {
  MergeResult result;
  for (const auto& [key, members] : cells) {
    if (members.empty()) fail(ErrorKind::argument, "merge_recycle: empty cell");
    const Token* anchor = &members.front();
    double weight_sum = 0.0;
    for (const auto& t : members) {
      if (!(t.importance >= 0.0)) {
        fail(ErrorKind::argument, "merge_recycle: negative importance");
      }
      weight_sum += t.importance;
      if (t.importance > anchor->importance ||
          (t.importance == anchor->importance && t.position_id < anchor->position_id)) {
        anchor = &t;
      }
    }
    Token fused = *anchor;
    if (members.size() > 1) {
      const std::size_t dim = anchor->rep.size();
      const bool unweighted = weight_sum <= 0.0;
      if (unweighted) ++result.unweighted_cells;
      std::vector<double> acc(dim, 0.0);
      for (const auto& t : members) {
        if (t.rep.size() != dim) fail(ErrorKind::shape, "merge_recycle: ragged representations");
        const double w = unweighted ? 1.0 : t.importance;
        for (std::size_t d = 0; d < dim; ++d) acc[d] += w * t.rep[d];
      }
      const double norm = unweighted ? static_cast<double>(members.size()) : weight_sum;
      for (std::size_t d = 0; d < dim; ++d) {
        fused.rep[d] = static_cast<float>(acc[d] / norm);
      }
    }
    result.fused.push_back(std::move(fused));
  }
  std::sort(result.fused.begin(), result.fused.end(),
            [](const Token& l, const Token& r) { return l.position_id < r.position_id; });
  return result;
}

PruneOutcome apply_stage_prune(const TokenSet& ts, std::size_t k, bool recycle, int a) {
  PruneOutcome out = topk_retain(ts, k);
  if (!recycle || out.pruned.tokens.empty()) return out;

  MergeResult merged = merge_recycle(assign_grid_cells(out.pruned, a));
  out.unweighted_cells = merged.unweighted_cells;
  auto& kept = out.retained.tokens;
  kept.insert(kept.end(), merged.fused.begin(), merged.fused.end());
  std::sort(kept.begin(), kept.end(),
            [](const Token& l, const Token& r) { return l.position_id < r.position_id; });
  out.merged = std::move(merged.fused);
  out.actual_count = kept.size();
  return out;
}

}  // namespace vflow::prune
