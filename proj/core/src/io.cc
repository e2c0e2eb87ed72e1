#include "topicmatch/io.h"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "topicmatch/errors.h"

namespace topicmatch {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

struct NetpbmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t offset = 0;
};

NetpbmHeader parse_netpbm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  NetpbmHeader h;
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
      tok.push_back(static_cast<char>(bytes[pos++]));
    }
    return tok;
  };
  h.magic = next_token();
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    fail(ErrorCode::kUnreadableImage, name + ": malformed netpbm header");
  }
  ++pos;  // single whitespace before the raster
  h.offset = pos;
  require(h.width > 0 && h.height > 0 && h.maxval > 0 && h.maxval < 256,
          ErrorCode::kUnreadableImage, name + ": unsupported netpbm dimensions or depth");
  return h;
}

ag::Matrix read_png_gray(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  require(fp != nullptr, ErrorCode::kUnreadableImage, "cannot open " + path.string());
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(fp, &std::fclose);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kUnreadableImage, "libpng initialization failed");
  }
  std::vector<std::uint8_t> raster;
  int width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kUnreadableImage, "corrupt PNG: " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  raster.resize(stride * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = raster.data() + stride * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  ag::Matrix out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out(y, x) = raster[stride * y + x] / 255.0;
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kMissingFile, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIOError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::kIOError, "write failed for " + path.string());
}

void write_pgm_bytes(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() == static_cast<std::size_t>(width) * height, ErrorCode::kShapeError,
          "PGM raster size mismatch");
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
  write_file(path, out);
}

void write_pgm(const std::filesystem::path& path, const ag::Matrix& gray) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(gray.size()));
  for (ag::Index i = 0; i < gray.size(); ++i) bytes[static_cast<std::size_t>(i)] = quantize(gray.data()[i]);
  write_pgm_bytes(path, static_cast<int>(gray.cols()), static_cast<int>(gray.rows()), bytes);
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  write_file(path, out);
}

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const NetpbmHeader h = parse_netpbm(bytes, path.string());
  require(h.magic == "P6", ErrorCode::kUnreadableImage, path.string() + ": not a binary PPM");
  RgbImage img(h.width, h.height);
  require(bytes.size() >= h.offset + img.data.size(), ErrorCode::kUnreadableImage,
          path.string() + ": truncated raster");
  std::memcpy(img.data.data(), bytes.data() + h.offset, img.data.size());
  return img;
}

ag::Matrix read_gray_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kUnreadableImage, "no such image " + path.string());
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    fail(ErrorCode::kUnreadableImage, "cannot read " + path.string());
  }
  static const std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngMagic, 8) == 0) return read_png_gray(path);
  require(bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'),
          ErrorCode::kUnreadableImage, path.string() + ": unsupported image format");
  const NetpbmHeader h = parse_netpbm(bytes, path.string());
  const int channels = h.magic == "P6" ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * channels;
  require(bytes.size() >= h.offset + need, ErrorCode::kUnreadableImage,
          path.string() + ": truncated raster");
  ag::Matrix out(h.height, h.width);
  const std::uint8_t* p = bytes.data() + h.offset;
  const double scale = 1.0 / h.maxval;
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      if (channels == 1) {
        out(y, x) = p[y * h.width + x] * scale;
      } else {
        const std::uint8_t* px = p + (static_cast<std::size_t>(y) * h.width + x) * 3;
        out(y, x) = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) * scale;
      }
    }
  }
  return out;
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1,
          ErrorCode::kIOError, "SHA-256 failed");
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::vector<std::uint8_t> encode_f64(const std::vector<double>& values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(double));
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

std::vector<std::uint8_t> encode_i32(const std::vector<std::int32_t>& values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(std::int32_t));
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

std::vector<double> decode_f64(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() % sizeof(double) == 0, ErrorCode::kIOError, "f64 array size not aligned");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<std::int32_t> decode_i32(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() % sizeof(std::int32_t) == 0, ErrorCode::kIOError, "i32 array size not aligned");
  std::vector<std::int32_t> out(bytes.size() / sizeof(std::int32_t));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace topicmatch
