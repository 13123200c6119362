#include "sdcd/view_transform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sdcd/error.hpp"
#include "sdcd/rng.hpp"

namespace sdcd {

namespace {

void require_divisible(const ImageGrid& image, std::size_t patch_size) {
  if (patch_size == 0) throw Error(ErrorKind::kInvalidArgument, "patch size must be >= 1");
  if (image.height() % patch_size != 0 || image.width() % patch_size != 0) {
    throw Error(ErrorKind::kNonDivisibleDimensions,
                "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                    " is not divisible by S=" + std::to_string(patch_size));
  }
}

}  // namespace

void to_json(nlohmann::json& j, const ShuffleSpec& spec) {
  j = nlohmann::json{{"S", spec.patch_size},
                     {"seed", spec.seed},
                     {"N", spec.permutation.size()},
                     {"permutation", spec.permutation}};
}

void from_json(const nlohmann::json& j, ShuffleSpec& spec) {
  spec.patch_size = j.at("S").get<std::size_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.permutation = j.at("permutation").get<Permutation>();
  if (j.at("N").get<std::size_t>() != spec.permutation.size()) {
    throw Error(ErrorKind::kMalformedRecord, "shuffle spec N disagrees with permutation length");
  }
  if (!is_permutation_of_iota(spec.permutation)) {
    throw Error(ErrorKind::kMalformedRecord, "shuffle spec permutation is not a bijection");
  }
}

std::size_t patch_count(const ImageGrid& image, std::size_t patch_size) {
  require_divisible(image, patch_size);
  return (image.height() / patch_size) * (image.width() / patch_size);
}

std::vector<Patch> partition(const ImageGrid& image, std::size_t patch_size) {
  require_divisible(image, patch_size);
  const std::size_t rows = image.height() / patch_size;
  const std::size_t cols = image.width() / patch_size;
  const std::size_t ch = image.channels();
  const std::size_t line = patch_size * ch;
  std::vector<Patch> patches;
  patches.reserve(rows * cols);
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      Patch patch{patch_size, ch, std::vector<std::uint8_t>(patch_size * line)};
      for (std::size_t y = 0; y < patch_size; ++y) {
        const auto* src = &image.data()[((pr * patch_size + y) * image.width() + pc * patch_size) * ch];
        std::copy_n(src, line, patch.pixels.begin() + static_cast<std::ptrdiff_t>(y * line));
      }
      patches.push_back(std::move(patch));
    }
  }
  return patches;
}

ImageGrid reassemble(const std::vector<Patch>& patches, std::size_t patches_per_col,
                     std::size_t patches_per_row) {
  if (patches.empty() || patches.size() != patches_per_col * patches_per_row) {
    throw Error(ErrorKind::kSpecMismatch, "patch count does not fill the requested grid");
  }
  const std::size_t s = patches.front().size;
  const std::size_t ch = patches.front().channels;
  ImageGrid image(patches_per_col * s, patches_per_row * s, ch);
  const std::size_t line = s * ch;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const std::size_t pr = i / patches_per_row;
    const std::size_t pc = i % patches_per_row;
    for (std::size_t y = 0; y < s; ++y) {
      auto* dst = &image.data()[((pr * s + y) * image.width() + pc * s) * ch];
      std::copy_n(patches[i].pixels.begin() + static_cast<std::ptrdiff_t>(y * line), line, dst);
    }
  }
  return image;
}

Permutation make_permutation(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "permutation size must be >= 1");
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

Permutation invert(const Permutation& permutation) {
  Permutation inverse(permutation.size());
  for (std::size_t i = 0; i < permutation.size(); ++i) inverse[permutation[i]] = i;
  return inverse;
}

bool is_permutation_of_iota(const Permutation& permutation) {
  std::vector<bool> seen(permutation.size(), false);
  for (std::size_t v : permutation) {
    if (v >= permutation.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

ShuffleSpec make_shuffle_spec(const ImageGrid& image, std::size_t patch_size, std::uint64_t seed) {
  return ShuffleSpec{patch_size, seed, make_permutation(patch_count(image, patch_size), seed)};
}

ImageGrid shuffle_patches(const ImageGrid& image, const ShuffleSpec& spec) {
  const auto patches = partition(image, spec.patch_size);
  if (patches.size() != spec.patch_count()) {
    throw Error(ErrorKind::kSpecMismatch, "shuffle spec has N=" + std::to_string(spec.patch_count()) +
                                              " but the image has " + std::to_string(patches.size()) +
                                              " patches");
  }
  if (!is_permutation_of_iota(spec.permutation)) {
    throw Error(ErrorKind::kSpecMismatch, "shuffle spec permutation is not a bijection");
  }
  std::vector<Patch> shuffled;
  shuffled.reserve(patches.size());
  for (std::size_t src : spec.permutation) shuffled.push_back(patches[src]);
  return reassemble(shuffled, image.height() / spec.patch_size, image.width() / spec.patch_size);
}

ImageGrid resize_bilinear(const ImageGrid& image, std::size_t height, std::size_t width) {
  ImageGrid out(height, width, image.channels());
  const double sy = static_cast<double>(image.height()) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width()) / static_cast<double>(width);
  for (std::size_t r = 0; r < height; ++r) {
    const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(image.height() - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < width; ++c) {
      const double fx = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(image.width() - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < image.channels(); ++ch) {
        const double top = (1 - wx) * image.at(y0, x0, ch) + wx * image.at(y0, x1, ch);
        const double bottom = (1 - wx) * image.at(y1, x0, ch) + wx * image.at(y1, x1, ch);
        out.at(r, c, ch) = static_cast<std::uint8_t>(std::lround((1 - wy) * top + wy * bottom));
      }
    }
  }
  return out;
}

ImageGrid preprocess_to_grid(const ImageGrid& image, std::size_t patch_size, PreprocessPolicy policy) {
  if (patch_size == 0) throw Error(ErrorKind::kInvalidArgument, "patch size must be >= 1");
  if (image.height() < patch_size || image.width() < patch_size) {
    throw Error(ErrorKind::kImageTooSmall,
                "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                    " is smaller than S=" + std::to_string(patch_size));
  }
  if (image.height() % patch_size == 0 && image.width() % patch_size == 0) return image;

  if (policy == PreprocessPolicy::kResize) {
    auto nearest = [patch_size](std::size_t n) {
      const auto k = static_cast<std::size_t>(std::lround(static_cast<double>(n) / static_cast<double>(patch_size)));
      return std::max<std::size_t>(k, 1) * patch_size;
    };
    return resize_bilinear(image, nearest(image.height()), nearest(image.width()));
  }

  const std::size_t h = (image.height() / patch_size) * patch_size;
  const std::size_t w = (image.width() / patch_size) * patch_size;
  const std::size_t top = (image.height() - h) / 2;
  const std::size_t left = (image.width() - w) / 2;
  ImageGrid out(h, w, image.channels());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t ch = 0; ch < image.channels(); ++ch) out.at(r, c, ch) = image.at(top + r, left + c, ch);
    }
  }
  return out;
}

ImageGrid gaussian_noise_view(const ImageGrid& image, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "noise sigma must be >= 0");
  if (sigma == 0.0) return image;
  ImageGrid out = image;
  Rng rng(seed);
  // Box-Muller, one normal per pixel value (the paired draw is discarded).
  for (auto& px : out.data()) {
    const double u1 = 1.0 - uniform_unit(rng);  // (0, 1]
    const double u2 = uniform_unit(rng);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    const double v = static_cast<double>(px) + sigma * z;
    px = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, static_cast<long>(kMaxIntensity)));
  }
  return out;
}

}  // namespace sdcd
