#pragma once

#include <cstddef>
#include <vector>

#include "imgproc.hpp"

namespace vflow::importance {

/// Token-to-token attention, row-major: at(i, j) is the weight token i puts
/// on token j. Head-averaged when the source has multiple heads.
struct AttentionMap {
  std::size_t n = 0;
  std::vector<double> weights;

  AttentionMap() = default;
  AttentionMap(std::size_t size, std::vector<double> w);

  double at(std::size_t i, std::size_t j) const { return weights[i * n + j]; }
  double column_sum(std::size_t j) const;
  bool operator==(const AttentionMap&) const = default;
};

/// Throws unless all entries are >= 0 and every row sums to 1 within tol.
void require_row_stochastic(const AttentionMap& a, double tol = 1e-6);

struct ImportanceParams {
  double t = 1.0;
  double alpha = 0.0;
};

struct KeyTokenSet {
  std::vector<std::size_t> indices;  // ascending
  double tau = 0.0;
};

struct ImportanceMap {
  std::vector<double> scores;
};

/// tau = t * (sum of all entries) / N.
double attention_threshold(const AttentionMap& a, double t);

/// Columns whose received attention strictly exceeds tau. When none does,
/// the single column with the largest received attention is returned
/// (smallest index on ties) so downstream scoring stays defined.
KeyTokenSet select_key_tokens(const AttentionMap& a, double tau);

/// I_i = sum_{k in K} A(k, i) + alpha * softmax(H)_i, softmax over all N.
ImportanceMap calibrated_importance(const AttentionMap& a, const KeyTokenSet& keys,
                                    const img::EntropyMap& entropy,
                                    const ImportanceParams& params);

/// Mean received attention; the uncalibrated ablation.
ImportanceMap plain_importance(const AttentionMap& a);

/// Threshold, key selection and scoring in one call.
ImportanceMap score_tokens(const AttentionMap& a, const img::EntropyMap& entropy,
                           const ImportanceParams& params, bool calibrated = true);

}  // namespace vflow::importance
