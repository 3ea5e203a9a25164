#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bayesopt.hpp"
#include "error.hpp"
#include "imgproc.hpp"
#include "importance.hpp"

namespace fixtures {

// Six tokens: 0-3 are near-duplicate background patches that put 0.9 of
// their mass on each other (mostly on token 0), 4-5 are detailed patches
// that mostly look at each other.
inline vflow::importance::AttentionMap redundancy_instance() {
  return {6,
          {0.60, 0.10, 0.10, 0.10, 0.05, 0.05,  //
           0.60, 0.10, 0.10, 0.10, 0.05, 0.05,  //
           0.60, 0.10, 0.10, 0.10, 0.05, 0.05,  //
           0.60, 0.10, 0.10, 0.10, 0.05, 0.05,  //
           0.10, 0.02, 0.02, 0.02, 0.42, 0.42,  //
           0.10, 0.02, 0.02, 0.02, 0.42, 0.42}};
}
inline vflow::img::EntropyMap redundancy_entropy() {
  return {{0.0, 0.0, 0.0, 0.0, 2.0, 2.0}, 256};
}
inline bool is_salient(std::size_t i) { return i >= 4; }

inline vflow::img::ImageBuffer gray_image(int w, int h, std::vector<std::uint8_t> px) {
  return {w, h, 1, std::move(px)};
}

// Random row-stochastic matrix.
inline vflow::importance::AttentionMap random_attention(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (w[i * n + j] = u(rng) * u(rng));
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= s;
  }
  return {n, std::move(w)};
}

// Concave quadratic on the unit 5-cube with its maximum (0) inside.
inline const vflow::bo::Point& quadratic_optimum() {
  static const vflow::bo::Point c{0.31, 0.62, 0.47, 0.71, 0.36};
  return c;
}
inline double quadratic(const vflow::bo::Point& x) {
  static const double w[5] = {1.0, 1.5, 0.8, 1.2, 1.0};
  double f = 0.0;
  for (std::size_t i = 0; i < 5; ++i) f -= w[i] * (x[i] - quadratic_optimum()[i]) * (x[i] - quadratic_optimum()[i]);
  return f;
}
inline double distance(const vflow::bo::Point& a, const vflow::bo::Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}
inline vflow::bo::BoProblem quadratic_problem() {
  vflow::bo::BoProblem p;
  p.dim = 5;
  p.canonicalize = [](const vflow::bo::Point& x) { return std::optional<vflow::bo::Point>(x); };
  p.evaluate = quadratic;
  return p;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vflowopt-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <typename F>
vflow::ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const vflow::Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected an error");
}

}  // namespace fixtures
