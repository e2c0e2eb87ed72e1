#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "topicmatch/autograd.h"

namespace topicmatch {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* at(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

// Grayscale values in [0, 1] are quantized with rounding and clamping.
void write_pgm(const std::filesystem::path& path, const ag::Matrix& gray);
void write_pgm_bytes(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& bytes);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

// Reads binary PGM (P5), PPM (P6) or PNG, converting to grayscale in [0, 1].
// Throws UnreadableImage on anything else.
ag::Matrix read_gray_image(const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Flat little-endian arrays.
std::vector<std::uint8_t> encode_f64(const std::vector<double>& values);
std::vector<std::uint8_t> encode_i32(const std::vector<std::int32_t>& values);
std::vector<double> decode_f64(const std::vector<std::uint8_t>& bytes);
std::vector<std::int32_t> decode_i32(const std::vector<std::uint8_t>& bytes);

}  // namespace topicmatch
