#include "importance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace vflow::importance {

AttentionMap::AttentionMap(std::size_t size, std::vector<double> w)
    : n(size), weights(std::move(w)) {
  if (weights.size() != n * n) {
    fail(ErrorKind::shape, "attention map: expected " + std::to_string(n * n) +
                               " weights, got " + std::to_string(weights.size()));
  }
}

double AttentionMap::column_sum(std::size_t j) const {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += at(i, j);
  return s;
}

void require_row_stochastic(const AttentionMap& a, double tol) {
  for (std::size_t i = 0; i < a.n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < a.n; ++j) {
      const double w = a.at(i, j);
      if (!(w >= 0.0) || !std::isfinite(w)) {
        fail(ErrorKind::argument, "attention map: negative or non-finite entry at (" +
                                      std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      row += w;
    }
    if (std::abs(row - 1.0) > tol) {
      fail(ErrorKind::argument,
           "attention map: row " + std::to_string(i) + " sums to " + std::to_string(row));
    }
  }
}

double attention_threshold(const AttentionMap& a, double t) {
  if (a.n == 0) return 0.0;
  double total = 0.0;
  for (double w : a.weights) total += w;
  return t * total / static_cast<double>(a.n);
}

KeyTokenSet select_key_tokens(const AttentionMap& a, double tau) {
  KeyTokenSet keys;
  keys.tau = tau;
  std::size_t best = 0;
  double best_sum = -1.0;
  for (std::size_t j = 0; j < a.n; ++j) {
    const double s = a.column_sum(j);
    if (s > tau) keys.indices.push_back(j);
    if (s > best_sum) {
      best_sum = s;
      best = j;
    }
  }
  if (keys.indices.empty() && a.n > 0) keys.indices.push_back(best);
  return keys;
}

ImportanceMap calibrated_importance(const AttentionMap& a, const KeyTokenSet& keys,
                                    const img::EntropyMap& entropy,
                                    const ImportanceParams& params) {
  if (entropy.values.size() != a.n) {
    fail(ErrorKind::shape, "importance: attention has " + std::to_string(a.n) +
                               " tokens but entropy map has " +
                               std::to_string(entropy.values.size()));
  }
  ImportanceMap out;
  out.scores.assign(a.n, 0.0);
  for (std::size_t k : keys.indices) {
    if (k >= a.n) fail(ErrorKind::shape, "importance: key index out of range");
    for (std::size_t i = 0; i < a.n; ++i) out.scores[i] += a.at(k, i);
  }
  if (params.alpha != 0.0 && a.n > 0) {
    const double hmax = *std::max_element(entropy.values.begin(), entropy.values.end());
    std::vector<double> e(a.n);
    double denom = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) {
      e[i] = std::exp(entropy.values[i] - hmax);
      denom += e[i];
    }
    for (std::size_t i = 0; i < a.n; ++i) out.scores[i] += params.alpha * e[i] / denom;
  }
  return out;
}

ImportanceMap plain_importance(const AttentionMap& a) {
  ImportanceMap out;
  out.scores.resize(a.n);
  for (std::size_t j = 0; j < a.n; ++j) {
    out.scores[j] = a.column_sum(j) / static_cast<double>(a.n);
  }
  return out;
}

ImportanceMap score_tokens(const AttentionMap& a, const img::EntropyMap& entropy,
                           const ImportanceParams& params, bool calibrated) {
  if (!calibrated) return plain_importance(a);
  const double tau = attention_threshold(a, params.t);
  return calibrated_importance(a, select_key_tokens(a, tau), entropy, params);
}

}  // namespace vflow::importance
