#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sdcd {

enum class PixelRepresentation { kUint8, kUnitReal };

// Pixels are 8-bit intensities in [0, 255] everywhere in this project.
inline constexpr PixelRepresentation kPixelRepresentation = PixelRepresentation::kUint8;
inline constexpr int kMaxIntensity = 255;

/**
 * Row-major H x W x C raster with interleaved channels (C is 1 or 3).
 * data().size() == height * width * channels always holds.
 */
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(std::size_t height, std::size_t width, std::size_t channels, std::uint8_t fill = 0);
  ImageGrid(std::size_t height, std::size_t width, std::size_t channels,
            std::vector<std::uint8_t> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  std::uint8_t at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  // Channel-mean intensity at a pixel.
  double intensity(std::size_t row, std::size_t col) const;

  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<std::uint8_t> data_;
};

// Synthetic images used by tests, probes and the synthetic dataset builder.
ImageGrid make_constant(std::size_t height, std::size_t width, std::uint8_t value,
                        std::size_t channels = 1);

// Linear ramp from low to high along direction angle_deg (0 = left to right).
ImageGrid make_gradient(std::size_t height, std::size_t width, double angle_deg,
                        double low = 0.0, double high = 255.0, std::size_t channels = 1);

// Alternating low/high cells of side cell pixels.
ImageGrid make_checkerboard(std::size_t height, std::size_t width, std::size_t cell,
                            std::uint8_t low = 0, std::uint8_t high = 255,
                            std::size_t channels = 1);

enum class ImageFormat { kPng, kPpm, kPgm };

// Picks the format from the extension (.png, .ppm, .pgm).
ImageFormat format_from_path(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_image(const ImageGrid& image, ImageFormat format);
ImageGrid decode_image(std::span<const std::uint8_t> bytes);

ImageGrid read_image(const std::filesystem::path& path);
void write_image(const ImageGrid& image, const std::filesystem::path& path);

}  // namespace sdcd
