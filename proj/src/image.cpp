#include "sdcd/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "sdcd/error.hpp"

namespace sdcd {

namespace {

void check_dims(std::size_t height, std::size_t width, std::size_t channels) {
  if (height < 1 || width < 1) {
    throw Error(ErrorKind::kInvalidArgument, "image dimensions must be at least 1x1");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::kInvalidArgument,
                "channel count must be 1 or 3, got " + std::to_string(channels));
  }
}

std::uint8_t to_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, static_cast<long>(kMaxIntensity)));
}

// --- PNG -------------------------------------------------------------------

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes.size()) {
    png_error(png, "truncated PNG stream");
  }
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct PngErrorState {
  char message[256] = {};
};

void png_on_error(png_structp png, png_const_charp message) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", message);
  png_longjmp(png, 1);
}

void png_warn_ignore(png_structp, png_const_charp) {}

// Only trivially destructible locals live in the frames that call setjmp.
bool decode_png_raw(std::span<const std::uint8_t> bytes, std::vector<std::uint8_t>& data,
                    std::size_t& height, std::size_t& width, std::size_t& channels,
                    PngErrorState& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_on_error, png_warn_ignore);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  png_bytep* rows = nullptr;
  PngReadCursor cursor{bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    std::free(rows);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &cursor, png_read_from_span);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  if (width == 0 || height == 0 || (channels != 1 && channels != 3)) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::snprintf(err.message, sizeof(err.message), "unsupported PNG layout");
    return false;
  }
  data.resize(height * width * channels);
  rows = static_cast<png_bytep*>(std::malloc(height * sizeof(png_bytep)));
  for (std::size_t r = 0; r < height; ++r) rows[r] = data.data() + r * width * channels;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  std::free(rows);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_png_raw(const ImageGrid& image, std::vector<std::uint8_t>& out, PngErrorState& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_on_error, png_warn_ignore);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8,
               image.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = image.width() * image.channels();
  for (std::size_t r = 0; r < image.height(); ++r) {
    png_write_row(png, const_cast<png_bytep>(image.data().data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

ImageGrid decode_png(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> data;
  std::size_t height = 0, width = 0, channels = 0;
  PngErrorState err;
  if (!decode_png_raw(bytes, data, height, width, channels, err)) {
    throw Error(ErrorKind::kDecodeError, std::string("libpng: ") + err.message);
  }
  return ImageGrid(height, width, channels, std::move(data));
}

std::vector<std::uint8_t> encode_png(const ImageGrid& image) {
  std::vector<std::uint8_t> out;
  PngErrorState err;
  if (!encode_png_raw(image, out, err)) {
    throw Error(ErrorKind::kIo, std::string("libpng: ") + err.message);
  }
  return out;
}

// --- PNM (P5 / P6, maxval 255) ----------------------------------------------

ImageGrid decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  const bool gray = bytes[1] == '5';
  auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t value = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw Error(ErrorKind::kDecodeError, "malformed PNM header");
    return value;
  };
  const std::size_t width = next_number();
  const std::size_t height = next_number();
  const std::size_t maxval = next_number();
  if (maxval != 255) throw Error(ErrorKind::kDecodeError, "only maxval 255 PNM is supported");
  ++pos;  // single whitespace before raster
  const std::size_t channels = gray ? 1 : 3;
  check_dims(height, width, channels);
  const std::size_t count = height * width * channels;
  if (bytes.size() < pos + count) throw Error(ErrorKind::kDecodeError, "truncated PNM raster");
  std::vector<std::uint8_t> data(bytes.begin() + pos, bytes.begin() + pos + count);
  return ImageGrid(height, width, channels, std::move(data));
}

std::vector<std::uint8_t> encode_pnm(const ImageGrid& image, bool gray) {
  if (gray != (image.channels() == 1)) {
    throw Error(ErrorKind::kInvalidArgument,
                gray ? "PGM needs a single-channel image" : "PPM needs a 3-channel image");
  }
  std::ostringstream header;
  header << (gray ? "P5" : "P6") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), image.data().begin(), image.data().end());
  return out;
}

}  // namespace

ImageGrid::ImageGrid(std::size_t height, std::size_t width, std::size_t channels, std::uint8_t fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(height * width * channels, fill);
}

ImageGrid::ImageGrid(std::size_t height, std::size_t width, std::size_t channels,
                     std::vector<std::uint8_t> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != height * width * channels) {
    throw Error(ErrorKind::kInvalidArgument, "pixel buffer length does not match H*W*C");
  }
}

double ImageGrid::intensity(std::size_t row, std::size_t col) const {
  const std::uint8_t* px = data_.data() + (row * width_ + col) * channels_;
  if (channels_ == 1) return px[0];
  double sum = 0.0;
  for (std::size_t c = 0; c < channels_; ++c) sum += px[c];
  return sum / static_cast<double>(channels_);
}

ImageGrid make_constant(std::size_t height, std::size_t width, std::uint8_t value, std::size_t channels) {
  return ImageGrid(height, width, channels, value);
}

ImageGrid make_gradient(std::size_t height, std::size_t width, double angle_deg, double low, double high,
                        std::size_t channels) {
  ImageGrid image(height, width, channels);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(theta);
  const double dy = std::sin(theta);
  const double w = static_cast<double>(width - 1);
  const double h = static_cast<double>(height - 1);
  const double corners[] = {0.0, w * dx, h * dy, w * dx + h * dy};
  const double pmin = *std::min_element(std::begin(corners), std::end(corners));
  const double pmax = *std::max_element(std::begin(corners), std::end(corners));
  const double span = pmax - pmin;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double p = static_cast<double>(c) * dx + static_cast<double>(r) * dy;
      const double t = span > 0.0 ? (p - pmin) / span : 0.0;
      const std::uint8_t v = to_pixel(low + (high - low) * t);
      for (std::size_t ch = 0; ch < channels; ++ch) image.at(r, c, ch) = v;
    }
  }
  return image;
}

ImageGrid make_checkerboard(std::size_t height, std::size_t width, std::size_t cell, std::uint8_t low,
                            std::uint8_t high, std::size_t channels) {
  if (cell == 0) throw Error(ErrorKind::kInvalidArgument, "checkerboard cell must be >= 1");
  ImageGrid image(height, width, channels);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::uint8_t v = ((r / cell + c / cell) % 2 == 0) ? low : high;
      for (std::size_t ch = 0; ch < channels; ++ch) image.at(r, c, ch) = v;
    }
  }
  return image;
}

ImageFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") return ImageFormat::kPng;
  if (ext == ".ppm") return ImageFormat::kPpm;
  if (ext == ".pgm") return ImageFormat::kPgm;
  throw Error(ErrorKind::kInvalidArgument, "unsupported image extension '" + ext + "'");
}

std::vector<std::uint8_t> encode_image(const ImageGrid& image, ImageFormat format) {
  switch (format) {
    case ImageFormat::kPng: return encode_png(image);
    case ImageFormat::kPpm: return encode_pnm(image, false);
    case ImageFormat::kPgm: return encode_pnm(image, true);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown image format");
}

ImageGrid decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
    return decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes);
  }
  throw Error(ErrorKind::kDecodeError, "unrecognised image encoding");
}

ImageGrid read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_image(bytes);
}

void write_image(const ImageGrid& image, const std::filesystem::path& path) {
  const auto bytes = encode_image(image, format_from_path(path));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

}  // namespace sdcd
