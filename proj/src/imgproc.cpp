#include "imgproc.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "error.hpp"

namespace vflow::img {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  int read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) {
        fail(ErrorKind::decode, std::string("pnm: ") + field +
                                    " out of range at offset " +
                                    std::to_string(start));
      }
      ++pos_;
    }
    if (pos_ == start) {
      fail(ErrorKind::decode, std::string("pnm: expected ") + field +
                                  " at offset " + std::to_string(start));
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void expect_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      fail(ErrorKind::decode, "pnm: expected whitespace after maxval at offset " +
                                  std::to_string(pos_));
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    fail(ErrorKind::decode, "pnm: missing P5/P6 magic at offset 0");
  }
  ImageBuffer img;
  img.channels = bytes[1] == '5' ? 1 : 3;

  HeaderReader reader(bytes.subspan(2));
  img.width = reader.read_uint("width");
  img.height = reader.read_uint("height");
  const std::size_t maxval_offset = reader.offset() + 2;
  const int maxval = reader.read_uint("maxval");
  if (maxval != 255) {
    fail(ErrorKind::decode, "pnm: maxval " + std::to_string(maxval) +
                                " unsupported (need 255) near offset " +
                                std::to_string(maxval_offset));
  }
  reader.expect_single_space();
  if (img.width <= 0 || img.height <= 0) {
    fail(ErrorKind::decode, "pnm: zero image dimension");
  }

  const std::size_t raster_offset = reader.offset() + 2;
  const std::size_t expected =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  const std::size_t available = bytes.size() - raster_offset;
  if (available < expected) {
    fail(ErrorKind::decode, "pnm: truncated raster at offset " +
                                std::to_string(bytes.size()) + " (need " +
                                std::to_string(expected) + " bytes from offset " +
                                std::to_string(raster_offset) + ", have " +
                                std::to_string(available) + ")");
  }
  img.data.assign(bytes.begin() + raster_offset,
                  bytes.begin() + raster_offset + expected);
  return img;
}

ImageBuffer read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_image(bytes);
}

std::vector<std::uint8_t> encode_image(const ImageBuffer& img) {
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") +
                             "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

ImageBuffer gray_levels(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) {
    fail(ErrorKind::argument, "gray_levels: channels must be 1 or 3");
  }
  ImageBuffer gray{img.width, img.height, 1, {}};
  const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
  gray.data.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    const unsigned sum = unsigned{img.data[3 * i]} + img.data[3 * i + 1] +
                         img.data[3 * i + 2];
    gray.data[i] = static_cast<std::uint8_t>(sum / 3);
  }
  return gray;
}

PatchGrid partition(const ImageBuffer& gray, int patch_size) {
  if (gray.channels != 1) {
    fail(ErrorKind::argument, "partition: image must be grayscale");
  }
  if (patch_size <= 0 || gray.width % patch_size != 0 ||
      gray.height % patch_size != 0) {
    fail(ErrorKind::shape, "partition: " + std::to_string(gray.width) + "x" +
                               std::to_string(gray.height) +
                               " image is not divisible by patch size " +
                               std::to_string(patch_size));
  }
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.cols = gray.width / patch_size;
  grid.rows = gray.height / patch_size;
  grid.patches.reserve(static_cast<std::size_t>(grid.cols) * grid.rows);
  for (int py = 0; py < grid.rows; ++py) {
    for (int px = 0; px < grid.cols; ++px) {
      std::vector<std::uint8_t> patch;
      patch.reserve(static_cast<std::size_t>(patch_size) * patch_size);
      for (int y = 0; y < patch_size; ++y) {
        for (int x = 0; x < patch_size; ++x) {
          patch.push_back(gray.at(px * patch_size + x, py * patch_size + y));
        }
      }
      grid.patches.push_back(std::move(patch));
    }
  }
  return grid;
}

double patch_entropy(std::span<const std::uint8_t> pixels) {
  if (pixels.empty()) return 0.0;
  std::array<std::size_t, 256> hist{};
  for (auto p : pixels) ++hist[p];
  const double total = static_cast<double>(pixels.size());
  double h = 0.0;
  for (auto count : hist) {
    if (count == 0) continue;  // 0 log 0 = 0
    const double p = static_cast<double>(count) / total;
    h -= p * std::log(p);
  }
  return h;
}

EntropyMap entropy_map(const ImageBuffer& gray, int patch_size) {
  const PatchGrid grid = partition(gray, patch_size);
  EntropyMap map;
  map.values.reserve(grid.size());
  for (const auto& patch : grid.patches) {
    map.values.push_back(patch_entropy(patch));
  }
  return map;
}

}  // namespace vflow::img
