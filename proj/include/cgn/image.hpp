// 8-bit grayscale images with PGM (P5) and PNG input/output.
#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cgn/errors.hpp"

namespace cgn {

inline constexpr std::size_t kMinImageSide = 16;

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

/// Throws InputError unless the image is at least 16x16 and its buffer matches.
inline void check_image(const GrayImage& img, const std::string& what = "image") {
  if (img.pixels.size() != img.width * img.height)
    throw InputError(what + ": pixel buffer does not match " + std::to_string(img.width) + "x" +
                     std::to_string(img.height));
  if (img.width < kMinImageSide || img.height < kMinImageSide)
    throw InputError(what + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     ", need at least 16x16");
}

namespace detail {

inline std::string read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Next whitespace-delimited header token, skipping '#' comments.
inline std::string pgm_token(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return s.substr(start, pos - start);
}

inline bool has_png_signature(const std::string& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0;
}

}  // namespace detail

inline GrayImage parse_pgm(const std::string& bytes, const std::string& name = "pgm") {
  std::size_t pos = 0;
  const std::string magic = detail::pgm_token(bytes, pos);
  if (magic != "P5") throw InputError(name + ": not a binary PGM (P5) file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(detail::pgm_token(bytes, pos));
    h = std::stoul(detail::pgm_token(bytes, pos));
    maxval = std::stoul(detail::pgm_token(bytes, pos));
  } catch (const std::logic_error&) {
    throw InputError(name + ": malformed PGM header");
  }
  if (maxval == 0 || maxval > 255) throw InputError(name + ": only 8-bit PGM is supported");
  ++pos;  // single whitespace after maxval
  if (bytes.size() < pos + w * h) throw InputError(name + ": truncated PGM data");
  GrayImage img(w, h);
  std::memcpy(img.pixels.data(), bytes.data() + pos, w * h);
  if (maxval != 255)
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>((p * 255u + maxval / 2) / maxval);
  return img;
}

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline GrayImage parse_png(const std::string& bytes, const std::string& name = "png") {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw InputError(name + ": " + image.message);
  if (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_COLORMAP)) {
    png_image_free(&image);
    throw InputError(name + ": not a grayscale image");
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage img(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw InputError(name + ": " + msg);
  }
  return img;
}

inline std::string encode_png(const GrayImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    throw InputError(std::string("png encode: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    throw InputError(std::string("png encode: ") + image.message);
  out.resize(size);
  return out;
}

/// Reads a PGM (P5) or PNG file, sniffing the format from its signature.
inline GrayImage read_image(const std::string& path) {
  const std::string bytes = detail::read_binary(path);
  GrayImage img = detail::has_png_signature(bytes) ? parse_png(bytes, path) : parse_pgm(bytes, path);
  check_image(img, path);
  return img;
}

/// Writes PNG when the path ends in ".png", PGM otherwise.
inline void write_image(const std::string& path, const GrayImage& img) {
  const bool png = path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0;
  const std::string bytes = png ? encode_png(img) : encode_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace cgn
