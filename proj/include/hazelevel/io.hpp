#pragma once

#include <png.h>

#include <array>
#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <charconv>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hazelevel/image.hpp"

namespace hazelevel {

struct Shape {
  int width = 0;
  int height = 0;
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Whitespace-separated header tokens of a netpbm-style file; '#' starts a
// comment. Leaves `pos` on the single whitespace byte that ends the header.
class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  std::string token() {
    skip_space_and_comments();
    std::string tok;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) tok.push_back(static_cast<char>(bytes_[pos_++]));
    if (tok.empty()) throw Error("malformed header in '" + path_ + "'");
    return tok;
  }

  long integer() {
    std::string tok = token();
    long v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw Error("malformed header in '" + path_ + "': expected integer, got '" + tok + "'");
    return v;
  }

  // Consumes exactly one whitespace byte and returns the payload offset.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw Error("malformed header in '" + path_ + "'");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline RasterImage decode_netpbm(const std::vector<unsigned char>& bytes, const std::string& path) {
  HeaderReader header(bytes, path);
  const std::string magic = header.token();
  if (magic != "P5" && magic != "P6") throw Error("'" + path + "': only binary PGM (P5) / PPM (P6) are supported");
  const int channels = magic == "P6" ? 3 : 1;
  const long width = header.integer();
  const long height = header.integer();
  const long maxval = header.integer();
  if (width < 1 || height < 1) throw Error("'" + path + "': zero-sized image");
  if (maxval < 1 || maxval > 65535) throw Error("'" + path + "': unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  const std::size_t offset = header.payload_offset();
  const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < offset + count * bytes_per_sample) throw Error("'" + path + "': truncated pixel data");

  std::vector<double> data(count);
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned v = bytes_per_sample == 2 ? (unsigned{bytes[offset + 2 * i]} << 8) | bytes[offset + 2 * i + 1]
                                       : bytes[offset + i];
    data[i] = std::min(1.0, v / scale);
  }
  return RasterImage(static_cast<int>(width), static_cast<int>(height), channels, std::move(data));
}

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngReadState() {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (file) std::fclose(file);
  }
};

struct PngWriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngWriteState() {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    if (file) std::fclose(file);
  }
};

inline void png_error_handler(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

inline RasterImage decode_png(const std::filesystem::path& path) {
  PngReadState st;
  std::string message;
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int channels = 0, bit_depth = 0;

  st.file = std::fopen(path.c_str(), "rb");
  if (!st.file) throw Error("cannot open '" + path.string() + "'");
  st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!st.png) throw Error("libpng initialization failed");
  st.info = png_create_info_struct(st.png);
  if (!st.info) throw Error("libpng initialization failed");

  if (setjmp(png_jmpbuf(st.png))) throw Error("'" + path.string() + "': " + message);

  png_init_io(st.png, st.file);
  png_read_info(st.png, st.info);
  const int color_type = png_get_color_type(st.png, st.info);
  bit_depth = png_get_bit_depth(st.png, st.info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(st.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(st.png);
  if (png_get_valid(st.png, st.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(st.png);
  png_set_strip_alpha(st.png);
  png_read_update_info(st.png, st.info);

  width = png_get_image_width(st.png, st.info);
  height = png_get_image_height(st.png, st.info);
  channels = png_get_channels(st.png, st.info);
  bit_depth = png_get_bit_depth(st.png, st.info);
  if (width == 0 || height == 0) throw Error("'" + path.string() + "': zero-sized image");
  if (bit_depth != 8 && bit_depth != 16)
    throw Error("'" + path.string() + "': unsupported bit depth " + std::to_string(bit_depth));
  if (channels != 1 && channels != 3)
    throw Error("'" + path.string() + "': unsupported channel layout");

  const std::size_t rowbytes = png_get_rowbytes(st.png, st.info);
  pixels.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(st.png, rows.data());
  png_read_end(st.png, nullptr);

  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<double> data(count);
  if (bit_depth == 16) {
    for (std::size_t i = 0; i < count; ++i)
      data[i] = ((unsigned{pixels[2 * i]} << 8) | pixels[2 * i + 1]) / 65535.0;
  } else {
    for (std::size_t i = 0; i < count; ++i) data[i] = pixels[i] / 255.0;
  }
  return RasterImage(static_cast<int>(width), static_cast<int>(height), channels, std::move(data));
}

inline std::uint16_t quantize16(double v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

inline void encode_png16(const RasterImage& image, const std::filesystem::path& path) {
  PngWriteState st;
  std::string message;
  const int channels = image.channels();
  const std::size_t rowbytes = static_cast<std::size_t>(image.width()) * channels * 2;
  std::vector<unsigned char> pixels(rowbytes * image.height());
  std::vector<png_bytep> rows(image.height());
  auto src = image.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::uint16_t q = quantize16(src[i]);
    pixels[2 * i] = static_cast<unsigned char>(q >> 8);
    pixels[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  for (int y = 0; y < image.height(); ++y) rows[y] = pixels.data() + y * rowbytes;

  st.file = std::fopen(path.c_str(), "wb");
  if (!st.file) throw Error("cannot write '" + path.string() + "'");
  st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!st.png) throw Error("libpng initialization failed");
  st.info = png_create_info_struct(st.png);
  if (!st.info) throw Error("libpng initialization failed");

  if (setjmp(png_jmpbuf(st.png))) throw Error("'" + path.string() + "': " + message);

  png_init_io(st.png, st.file);
  png_set_compression_level(st.png, 6);
  png_set_IHDR(st.png, st.info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()),
               16, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(st.png, st.info);
  png_write_image(st.png, rows.data());
  png_write_end(st.png, nullptr);
}

inline void encode_netpbm16(const RasterImage& image, const std::filesystem::path& path) {
  std::string out = (image.channels() == 3 ? "P6\n" : "P5\n") + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n65535\n";
  auto src = image.values();
  out.reserve(out.size() + src.size() * 2);
  for (double v : src) {
    const std::uint16_t q = quantize16(v);
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  write_file(path, out);
}

inline bool has_extension(const std::filesystem::path& path, std::string_view ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

// Raw (unsanitized) depth/scalar raster; entries may be non-finite.
struct RawRaster {
  int width = 0;
  int height = 0;
  std::vector<double> data;
};

inline RawRaster decode_pfm(const std::vector<unsigned char>& bytes, const std::string& path) {
  HeaderReader header(bytes, path);
  const std::string magic = header.token();
  if (magic == "PF") throw Error("'" + path + "': color PFM is not supported, expected grayscale 'Pf'");
  if (magic != "Pf") throw Error("'" + path + "': malformed PFM header");
  const long width = header.integer();
  const long height = header.integer();
  const auto scale = parse_double(header.token());
  if (!scale || *scale == 0.0) throw Error("'" + path + "': malformed PFM scale line");
  if (width < 1 || height < 1) throw Error("'" + path + "': zero-sized raster");
  const std::size_t offset = header.payload_offset();
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (bytes.size() < offset + count * 4) throw Error("'" + path + "': truncated PFM data");
  const bool little = *scale < 0.0;

  RawRaster raster{static_cast<int>(width), static_cast<int>(height), std::vector<double>(count)};
  for (long row = 0; row < height; ++row) {
    // PFM rows are stored bottom-to-top.
    const long y = height - 1 - row;
    for (long x = 0; x < width; ++x) {
      const unsigned char* p = bytes.data() + offset + (static_cast<std::size_t>(row) * width + x) * 4;
      std::uint32_t bits = little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
                                     std::uint32_t{p[3]} << 24)
                                  : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 |
                                     std::uint32_t{p[0]} << 24);
      raster.data[static_cast<std::size_t>(y) * width + x] = std::bit_cast<float>(bits);
    }
  }
  return raster;
}

inline RawRaster decode_depth_text(const std::vector<unsigned char>& bytes, const std::string& path) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string magic, version;
  long width = 0, height = 0;
  if (!(in >> magic >> version >> width >> height) || magic != "DEPTH" || version != "1")
    throw Error("'" + path + "': malformed DEPTH header");
  if (width < 1 || height < 1) throw Error("'" + path + "': zero-sized raster");
  RawRaster raster{static_cast<int>(width), static_cast<int>(height), {}};
  raster.data.reserve(static_cast<std::size_t>(width) * height);
  std::string line;
  std::getline(in, line);
  for (long y = 0; y < height; ++y) {
    if (!std::getline(in, line)) throw Error("'" + path + "': expected " + std::to_string(height) + " rows");
    std::istringstream row(line);
    std::string tok;
    long n = 0;
    while (row >> tok) {
      auto v = parse_double(tok);
      if (!v) throw Error("'" + path + "': bad value '" + tok + "' on row " + std::to_string(y));
      raster.data.push_back(*v);
      ++n;
    }
    if (n != width)
      throw Error("'" + path + "': row " + std::to_string(y) + " has " + std::to_string(n) + " values, expected " +
                  std::to_string(width));
  }
  return raster;
}

inline RawRaster read_raster(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == 'f' || bytes[1] == 'F')) return decode_pfm(bytes, path.string());
  if (bytes.size() >= 5 && std::memcmp(bytes.data(), "DEPTH", 5) == 0) return decode_depth_text(bytes, path.string());
  throw Error("'" + path.string() + "': not a PFM or DEPTH file");
}

}  // namespace detail

/// Loads an 8/16-bit PNG or a binary PGM/PPM, normalizing by the format's
/// maximum value. Gray files stay single-channel.
inline RasterImage load_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return detail::decode_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P') return detail::decode_netpbm(bytes, path.string());
  if (bytes.empty()) throw Error("'" + path.string() + "': empty file");
  throw Error("'" + path.string() + "': unsupported image format (expected PNG, PGM or PPM)");
}

/// Writes a 16-bit PNG, or a 16-bit PPM/PGM when the extension is .ppm/.pgm.
inline void save_image(const RasterImage& image, const std::filesystem::path& path) {
  if (detail::has_extension(path, ".ppm") || detail::has_extension(path, ".pgm")) {
    if (detail::has_extension(path, ".ppm") && image.channels() != 3)
      return detail::encode_netpbm16(image.to_rgb(), path);
    detail::encode_netpbm16(image, path);
    return;
  }
  detail::encode_png16(image, path);
}

/// Loads a depth raster (PFM or DEPTH text). Negative and non-finite entries
/// become d_max; everything is clamped to [0, d_max]. When `expected` is set
/// the raster must match it exactly.
inline DepthMap load_depth(const std::filesystem::path& path, double d_max,
                           std::optional<Shape> expected = std::nullopt) {
  auto raster = detail::read_raster(path);
  if (expected && (expected->width != raster.width || expected->height != raster.height))
    throw Error("'" + path.string() + "': depth is " + std::to_string(raster.width) + "x" +
                std::to_string(raster.height) + " but the image is " + std::to_string(expected->width) + "x" +
                std::to_string(expected->height));
  return DepthMap(raster.width, raster.height, std::move(raster.data), d_max);
}

/// Loads a scalar map saved by save_map. All entries must be finite.
inline ScalarMap load_map(const std::filesystem::path& path) {
  auto raster = detail::read_raster(path);
  return ScalarMap(raster.width, raster.height, std::move(raster.data));
}

/// PFM (float32, little-endian, bottom-to-top rows) by default. A `.depth`
/// or `.txt` extension selects the DEPTH text format, which keeps doubles
/// exact.
inline void save_map(const ScalarMap& map, const std::filesystem::path& path) {
  if (detail::has_extension(path, ".depth") || detail::has_extension(path, ".txt")) {
    std::string out = "DEPTH 1 " + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n";
    for (int y = 0; y < map.height(); ++y) {
      for (int x = 0; x < map.width(); ++x) {
        if (x) out.push_back(' ');
        out += detail::format_double(map(x, y));
      }
      out.push_back('\n');
    }
    detail::write_file(path, out);
    return;
  }
  std::string out = "Pf\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + map.size() * 4);
  char* dst = out.data() + header;
  for (int row = 0; row < map.height(); ++row) {
    const int y = map.height() - 1 - row;
    for (int x = 0; x < map.width(); ++x) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(map(x, y)));
      for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  detail::write_file(path, out);
}

}  // namespace hazelevel
