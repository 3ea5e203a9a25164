#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"
#include "imgproc.hpp"

using namespace vflow;
using namespace vflow::img;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> raster) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

std::string message_of(const std::vector<std::uint8_t>& file) {
  try {
    decode_image(file);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::decode);
    return e.what();
  }
  FAIL("expected a decode error");
  return {};
}

}  // namespace

TEST_CASE("decode P5 copies samples") {
  const auto img = decode_image(bytes_of("P5\n2 2\n255\n", {0, 255, 0, 255}));
  CHECK(img == ImageBuffer{2, 2, 1, {0, 255, 0, 255}});
}

TEST_CASE("decode P6 single pixel") {
  const auto img = decode_image(bytes_of("P6 1 1 255\n", {30, 60, 90}));
  CHECK(img == ImageBuffer{1, 1, 3, {30, 60, 90}});
}

TEST_CASE("decode skips header comments") {
  const auto img = decode_image(bytes_of("P5\n# made by hand\n1 # w\n1\n255\n", {7}));
  CHECK(img.data == std::vector<std::uint8_t>{7});
}

TEST_CASE("decode keeps raster bytes that look like whitespace") {
  const auto img = decode_image(bytes_of("P5 2 1 255\n", {'\n', ' '}));
  CHECK(img.data == std::vector<std::uint8_t>{'\n', ' '});
}

TEST_CASE("decode errors name an offset") {
  SUBCASE("truncated P6") {
    const auto msg = message_of(bytes_of("P6\n4 4\n255\n", {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    CHECK(msg.find("truncated") != std::string::npos);
    CHECK(msg.find("offset") != std::string::npos);
  }
  SUBCASE("bad magic") { CHECK(message_of(bytes_of("P3\n1 1\n255\n", {0})).find("offset 0") != std::string::npos); }
  SUBCASE("maxval not 255") {
    CHECK(message_of(bytes_of("P5\n1 1\n65535\n", {0, 0})).find("maxval") != std::string::npos);
  }
  SUBCASE("missing height") { CHECK(message_of(bytes_of("P5\n1 ", {})).find("height") != std::string::npos); }
  SUBCASE("zero width") { CHECK(message_of(bytes_of("P5\n0 1\n255\n", {})).find("dimension") != std::string::npos); }
}

TEST_CASE("encode and decode round trip") {
  std::mt19937_64 rng(3);
  for (int channels : {1, 3}) {
    ImageBuffer img{5, 3, channels, {}};
    img.data.resize(15 * channels);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng());
    CHECK(decode_image(encode_image(img)) == img);
  }
}

TEST_CASE("read_image reports missing files as io errors") {
  CHECK(fixtures::error_kind([] { read_image("/nonexistent/image.pgm"); }) == ErrorKind::io);
}

TEST_CASE("gray levels floor the RGB mean") {
  CHECK(gray_levels(ImageBuffer{1, 1, 3, {30, 60, 90}}).data[0] == 60);
  CHECK(gray_levels(ImageBuffer{1, 1, 3, {0, 0, 1}}).data[0] == 0);
  CHECK(gray_levels(ImageBuffer{1, 1, 3, {255, 255, 254}}).data[0] == 254);
  const ImageBuffer g{2, 1, 1, {9, 200}};
  CHECK(gray_levels(g) == g);
}

TEST_CASE("entropy goldens") {
  CHECK(patch_entropy(std::vector<std::uint8_t>(16, 128)) == 0.0);
  CHECK(patch_entropy(std::vector<std::uint8_t>{10, 10, 20, 20}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(patch_entropy(std::vector<std::uint8_t>{1, 2, 3, 4}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  std::vector<std::uint8_t> all(256);
  std::iota(all.begin(), all.end(), 0);
  CHECK(std::abs(patch_entropy(all) - std::log(256.0)) < 1e-9);
}

TEST_CASE("entropy is permutation invariant and bounded") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> px(64);
    const int levels = 1 + static_cast<int>(rng() % 64);
    for (auto& v : px) v = static_cast<std::uint8_t>(rng() % levels);
    const double h = patch_entropy(px);
    std::shuffle(px.begin(), px.end(), rng);
    CHECK(patch_entropy(px) == h);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(256.0) + 1e-12);
    const bool constant = std::all_of(px.begin(), px.end(), [&](auto v) { return v == px[0]; });
    CHECK((h == 0.0) == constant);
  }
}

TEST_CASE("entropy map ordering is row-major over patches") {
  // 3x2 grid of 2x2 patches; patch i holds i+1 distinct levels (capped at 4).
  const int ps = 2, cols = 3, rows = 2;
  ImageBuffer img{cols * ps, rows * ps, 1, std::vector<std::uint8_t>(cols * ps * rows * ps, 0)};
  for (int i = 0; i < cols * rows; ++i) {
    const int px = (i % cols) * ps, py = (i / cols) * ps;
    const int distinct = std::min(i + 1, 4);
    for (int k = 0; k < 4; ++k) {
      img.data[(py + k / 2) * img.width + px + k % 2] = static_cast<std::uint8_t>(10 * (k % distinct));
    }
  }
  const auto map = entropy_map(img, ps);
  const auto grid = partition(img, ps);
  CHECK(grid.cols == cols);
  CHECK(grid.rows == rows);
  REQUIRE(map.values.size() == 6);
  CHECK(map.values[0] == 0.0);
  CHECK(map.values[1] == doctest::Approx(std::log(2.0)));
  CHECK(map.values[2] == doctest::Approx(-(0.5 * std::log(0.5) + 2 * 0.25 * std::log(0.25))));
  CHECK(map.values[3] == doctest::Approx(std::log(4.0)));
  CHECK(map.values[5] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("entropy map of a constant image is zero") {
  const auto map = entropy_map(ImageBuffer{8, 8, 1, std::vector<std::uint8_t>(64, 77)}, 4);
  CHECK(map.values == std::vector<double>(4, 0.0));
}

TEST_CASE("partition rejects bad inputs") {
  CHECK(fixtures::error_kind([] { entropy_map(ImageBuffer{6, 4, 1, std::vector<std::uint8_t>(24)}, 4); }) ==
        ErrorKind::shape);
  CHECK(fixtures::error_kind([] { partition(ImageBuffer{4, 4, 3, std::vector<std::uint8_t>(48)}, 2); }) ==
        ErrorKind::argument);
}
