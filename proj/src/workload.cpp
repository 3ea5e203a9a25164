#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "prng.hpp"
#include "toylmm.hpp"

namespace vflow::toy {
namespace {

class Draw {
 public:
  Draw(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
  double uniform() { return counter_uniform(seed_, stream_, index_++); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

 private:
  std::uint64_t seed_, stream_, index_ = 0;
};

std::uint8_t clamp_level(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

img::ImageBuffer synthesize(int size, Draw& draw) {
  std::vector<int> level(static_cast<std::size_t>(size) * size, draw.integer(0, 255));
  const auto set = [&](int x, int y, int v) {
    if (x >= 0 && y >= 0 && x < size && y < size) level[static_cast<std::size_t>(y) * size + x] = v;
  };

  const int rects = draw.integer(1, 3);
  for (int r = 0; r < rects; ++r) {
    const int w = draw.integer(size / 8, size / 2), h = draw.integer(size / 8, size / 2);
    const int x0 = draw.integer(0, size - w), y0 = draw.integer(0, size - h);
    const int v = draw.integer(0, 255);
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) set(x, y, v);
  }

  // Noise blob.
  const int radius = draw.integer(std::max(2, size / 10), std::max(3, size / 4));
  const int cx = draw.integer(0, size - 1), cy = draw.integer(0, size - 1);
  for (int y = cy - radius; y <= cy + radius; ++y)
    for (int x = cx - radius; x <= cx + radius; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) set(x, y, draw.integer(0, 255));

  // Horizontal gradient strip.
  const int band = draw.integer(std::max(1, size / 8), std::max(2, size / 4));
  const int y0 = draw.integer(0, size - band);
  const int start = draw.integer(0, 255), span = draw.integer(-255, 255);
  for (int y = y0; y < y0 + band; ++y)
    for (int x = 0; x < size; ++x) set(x, y, start + span * x / std::max(1, size - 1));

  img::ImageBuffer image{size, size, 3, {}};
  int tint[3];
  for (int& t : tint) t = draw.integer(-20, 20);
  image.data.reserve(level.size() * 3);
  for (int v : level)
    for (int c = 0; c < 3; ++c) image.data.push_back(clamp_level(std::clamp(v, 0, 255) + tint[c]));
  return image;
}

}  // namespace

std::vector<WorkloadSample> synthetic_workload(std::size_t count, int image_size,
                                               int patch_size, std::uint64_t seed) {
  if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0) {
    fail(ErrorKind::config, "synthetic workload: image size " + std::to_string(image_size) +
                                " is not a multiple of patch size " + std::to_string(patch_size));
  }
  std::vector<WorkloadSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Draw draw(seed, i);
    WorkloadSample s;
    s.image = synthesize(image_size, draw);
    s.patch_size = patch_size;
    s.text_seed = counter_bits(seed, 0xfeedULL, i);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<WorkloadSample> image_workload(const std::filesystem::path& dir, int patch_size,
                                           std::uint64_t seed) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    fail(ErrorKind::io, "image directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::io, "no .pgm/.ppm images in " + dir.string());
  std::vector<WorkloadSample> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    out.push_back({img::read_image(files[i]), patch_size, counter_bits(seed, 0xfeedULL, i)});
  }
  return out;
}

}  // namespace vflow::toy
