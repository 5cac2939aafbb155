#include "malite/byteplot.hpp"

#include <zlib.h>

#include <algorithm>

#include "malite/error.hpp"
#include "malite/util.hpp"

namespace malite {

bool ByteImage::valid() const {
  return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
         pixels.size() == static_cast<std::size_t>(width) * height * channels;
}

int width_for_size(std::uint64_t file_size) {
  if (file_size == 0) fail(ErrorKind::EmptyInput, "empty input file");
  for (const auto& band : kWidthRule) {
    if (band.upper_kb == 0 || file_size < band.upper_kb * 1024) return band.width;
  }
  return kWidthRule.back().width;
}

namespace {

int padded_height(std::size_t cells, int width) {
  auto rows = static_cast<std::size_t>((cells + width - 1) / width);
  rows = (rows + kHeightMultiple - 1) / kHeightMultiple * kHeightMultiple;
  return static_cast<int>(rows);
}

}  // namespace

ByteImage to_gray_image(std::span<const std::uint8_t> data) {
  ByteImage img;
  img.width = width_for_size(data.size());
  img.height = padded_height(data.size(), img.width);
  img.channels = 1;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0);
  std::copy(data.begin(), data.end(), img.pixels.begin());
  return img;
}

ByteImage to_rgb_image(std::span<const std::uint8_t> data) {
  ByteImage img;
  img.width = width_for_size(data.size());
  const std::size_t n_pixels = (data.size() + 2) / 3;
  img.height = padded_height(n_pixels, img.width);
  img.channels = 3;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  std::copy(data.begin(), data.end(), img.pixels.begin());
  return img;
}

ByteImage resize_square(const ByteImage& img, int side) {
  if (!img.valid()) fail(ErrorKind::ShapeError, "invalid image");
  if (side <= 0) fail(ErrorKind::ShapeError, "resize side must be positive");
  if (img.width == side && img.height == side) return img;

  ByteImage out;
  out.width = side;
  out.height = side;
  out.channels = img.channels;
  out.pixels.resize(static_cast<std::size_t>(side) * side * img.channels);

  std::vector<int> src_x(static_cast<std::size_t>(side));
  for (int x = 0; x < side; ++x) {
    src_x[x] = static_cast<int>(static_cast<std::int64_t>(x) * img.width / side);
  }
  const int c = img.channels;
  for (int y = 0; y < side; ++y) {
    const int sy = static_cast<int>(static_cast<std::int64_t>(y) * img.height / side);
    const std::uint8_t* src = img.pixels.data() + static_cast<std::size_t>(sy) * img.row_bytes();
    std::uint8_t* dst = out.pixels.data() + static_cast<std::size_t>(y) * out.row_bytes();
    for (int x = 0; x < side; ++x) {
      for (int k = 0; k < c; ++k) dst[x * c + k] = src[src_x[x] * c + k];
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_raw(const ByteImage& img) {
  if (!img.valid()) fail(ErrorKind::ShapeError, "invalid image");
  if (img.width > 0xFFFF || img.height > 0xFFFF) {
    fail(ErrorKind::ShapeError, "image too large for raw dump header");
  }
  ByteWriter w;
  w.str("MLIM");
  w.u16(static_cast<std::uint16_t>(img.width));
  w.u16(static_cast<std::uint16_t>(img.height));
  w.u8(static_cast<std::uint8_t>(img.channels));
  for (int i = 0; i < 7; ++i) w.u8(0);
  w.bytes(img.pixels);
  return w.take();
}

ByteImage decode_raw(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "MLIM") fail(ErrorKind::FormatError, "bad raw image magic");
  ByteImage img;
  img.width = r.u16();
  img.height = r.u16();
  img.channels = r.u8();
  r.bytes(7);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  auto px = r.bytes(n);
  img.pixels.assign(px.begin(), px.end());
  if (!img.valid()) fail(ErrorKind::FormatError, "bad raw image header");
  return img;
}

namespace {

void png_chunk(ByteWriter& w, std::string_view type, std::span<const std::uint8_t> data) {
  auto put_be32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) w.u8(static_cast<std::uint8_t>(v >> s));
  };
  put_be32(static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> crc_input(type.begin(), type.end());
  crc_input.insert(crc_input.end(), data.begin(), data.end());
  w.bytes(crc_input);
  put_be32(crc32(crc_input));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ByteImage& img) {
  if (!img.valid()) fail(ErrorKind::ShapeError, "invalid image");
  std::vector<std::uint8_t> scanlines;
  scanlines.reserve((img.row_bytes() + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    scanlines.push_back(0);  // filter: none
    auto row = img.pixels.begin() + static_cast<std::ptrdiff_t>(y * img.row_bytes());
    scanlines.insert(scanlines.end(), row, row + static_cast<std::ptrdiff_t>(img.row_bytes()));
  }
  uLongf bound = compressBound(static_cast<uLong>(scanlines.size()));
  std::vector<std::uint8_t> idat(bound);
  if (compress2(idat.data(), &bound, scanlines.data(), static_cast<uLong>(scanlines.size()), 6) != Z_OK) {
    fail(ErrorKind::IoError, "zlib compression failed");
  }
  idat.resize(bound);

  ByteWriter ihdr;
  auto be32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) ihdr.u8(static_cast<std::uint8_t>(v >> s));
  };
  be32(static_cast<std::uint32_t>(img.width));
  be32(static_cast<std::uint32_t>(img.height));
  ihdr.u8(8);                          // bit depth
  ihdr.u8(img.channels == 1 ? 0 : 2);  // gray / truecolour
  ihdr.u8(0);
  ihdr.u8(0);
  ihdr.u8(0);

  ByteWriter w;
  const std::uint8_t signature[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  w.bytes(signature);
  png_chunk(w, "IHDR", ihdr.buffer());
  png_chunk(w, "IDAT", idat);
  png_chunk(w, "IEND", {});
  return w.take();
}

}  // namespace malite
