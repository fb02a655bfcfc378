// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "common/error.hpp"

namespace cdflow::io {

namespace {

using ad::Tensor;

[[noreturn]] void input_error(const std::string& path, const std::string& what) {
  fail(ErrorCode::input, path + ": " + what);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) input_error(path, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor from_bytes(const std::uint8_t* data, std::size_t height, std::size_t width) {
  Tensor out({height, width, 3});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data[i] / 255.0;
  return out;
}

std::vector<std::uint8_t> to_bytes(const Tensor& image) {
  if (image.rank() != 3 || image.shape()[2] != 3) fail(ErrorCode::dimension, "expected an (H, W, 3) image");
  std::vector<std::uint8_t> out(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return out;
}

// PPM header tokens, skipping whitespace and '#' comments.
struct PnmReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 2;

  bool next_uint(std::size_t& value) {
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > (1u << 20)) return false;
      ++pos;
    }
    return pos > start;
  }
};

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  PnmReader r{bytes};
  std::size_t width = 0, height = 0, maxval = 0;
  if (!r.next_uint(width) || !r.next_uint(height) || !r.next_uint(maxval)) input_error(path, "malformed PPM header");
  if (maxval != 255) input_error(path, "only 8-bit PPM (maxval 255) is supported");
  if (width == 0 || height == 0) input_error(path, "empty image");
  if (r.pos >= bytes.size() || !std::isspace(bytes[r.pos])) input_error(path, "malformed PPM header");
  ++r.pos;
  if (bytes.size() - r.pos < width * height * 3) input_error(path, "truncated PPM data");
  return from_bytes(bytes.data() + r.pos, height, width);
}

Tensor decode_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    input_error(path, std::string("PNG decode failed: ") + img.message);
  const bool alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool linear = (img.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  if (alpha || !color || linear) {
    png_image_free(&img);
    input_error(path, "expected an 8-bit RGB PNG without alpha");
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    input_error(path, "PNG decode failed: " + msg);
  }
  return from_bytes(buffer.data(), img.height, img.width);
}

void write_file(const std::string& path, const std::string& header, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::output, path + ": cannot open for writing");
  out << header;
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::output, path + ": write failed");
}

bool ends_with_png(const std::string& path) {
  if (path.size() < 4) return false;
  std::string ext = path.substr(path.size() - 4);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace

Tensor load_image(const std::string& path) {
  const auto bytes = read_bytes(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path);
  input_error(path, "not an 8-bit RGB PNG or binary PPM");
}

void save_image(const Tensor& image, const std::string& path) {
  const auto data = to_bytes(image);
  const std::size_t height = image.shape()[0], width = image.shape()[1];
  if (!ends_with_png(path)) {
    write_file(path, "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n", data);
    return;
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data.data(), 0, nullptr))
    fail(ErrorCode::output, path + ": PNG write failed: " + img.message);
}

void save_gray(const std::vector<std::uint8_t>& pixels, std::size_t height, std::size_t width,
               const std::string& path) {
  if (pixels.size() != height * width) fail(ErrorCode::dimension, "gray image size mismatch");
  write_file(path, "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n", pixels);
}

Tensor center_crop(const Tensor& image, std::size_t multiple) {
  if (image.rank() != 3 || multiple == 0) fail(ErrorCode::dimension, "center_crop expects an (H, W, C) image");
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  const std::size_t nh = h / multiple * multiple, nw = w / multiple * multiple;
  if (nh == 0 || nw == 0)
    fail(ErrorCode::dimension, "image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than " +
                                   std::to_string(multiple));
  const std::size_t oy = (h - nh) / 2, ox = (w - nw) / 2;
  Tensor out({nh, nw, c});
  for (std::size_t y = 0; y < nh; ++y)
    for (std::size_t x = 0; x < nw; ++x)
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = image.at(oy + y, ox + x, k);
  return out;
}

}  // namespace cdflow::io
