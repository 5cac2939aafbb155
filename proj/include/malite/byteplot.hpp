#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace malite {

/// Row-major 8-bit raster; RGB samples are channel-interleaved.
struct ByteImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t row_bytes() const { return static_cast<std::size_t>(width) * channels; }
  bool valid() const;

  friend bool operator==(const ByteImage&, const ByteImage&) = default;
};

struct WidthBand {
  std::uint64_t upper_kb;  // exclusive; 0 means unbounded
  int width;
};

/// File-size bands (KB, half-open [lo, hi)) and the byteplot width for each.
inline constexpr std::array<WidthBand, 8> kWidthRule{{
    {10, 32},
    {30, 64},
    {60, 128},
    {100, 256},
    {200, 384},
    {500, 512},
    {1000, 768},
    {0, 1024},
}};

inline constexpr int kDefaultSide = 256;
inline constexpr int kHeightMultiple = 32;

int width_for_size(std::uint64_t file_size);

ByteImage to_gray_image(std::span<const std::uint8_t> data);
ByteImage to_rgb_image(std::span<const std::uint8_t> data);

/// Nearest-neighbour resample to side x side.
ByteImage resize_square(const ByteImage& img, int side = kDefaultSide);

// Raw dump: "MLIM", u16 width, u16 height, u8 channels, 7 zero bytes, samples.
std::vector<std::uint8_t> encode_raw(const ByteImage& img);
ByteImage decode_raw(std::span<const std::uint8_t> bytes);

/// 8-bit gray or RGB PNG, zlib-compressed, no filtering.
std::vector<std::uint8_t> encode_png(const ByteImage& img);

}  // namespace malite
