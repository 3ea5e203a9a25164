#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vflow::img {

/// 8-bit raster, row-major, channels interleaved. channels is 1 or 3.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const ImageBuffer&) const = default;
};

/// Square patches in row-major patch order. Token i sits at grid coordinate
/// (i % cols, i / cols).
struct PatchGrid {
  int patch_size = 0;
  int cols = 0;
  int rows = 0;
  std::vector<std::vector<std::uint8_t>> patches;

  std::size_t size() const { return patches.size(); }
};

/// Per-token patch entropy in nats. Values lie in [0, ln(gray_levels)].
struct EntropyMap {
  std::vector<double> values;
  int gray_levels = 256;
};

/// Parses a binary P5 (gray) or P6 (RGB) portable pixmap with maxval 255.
/// Header comments starting with '#' are skipped. Decode errors name the
/// byte offset at which parsing stopped.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
ImageBuffer read_image(const std::filesystem::path& path);

/// Serializes as P5 or P6 depending on channels.
std::vector<std::uint8_t> encode_image(const ImageBuffer& img);

/// Floor of the RGB mean; identity for single-channel input.
ImageBuffer gray_levels(const ImageBuffer& img);

PatchGrid partition(const ImageBuffer& gray, int patch_size);

/// Shannon entropy (natural log) of the 256-bin histogram of one patch.
double patch_entropy(std::span<const std::uint8_t> pixels);

/// Requires a grayscale image whose sides are multiples of patch_size.
EntropyMap entropy_map(const ImageBuffer& gray, int patch_size);

}  // namespace vflow::img
