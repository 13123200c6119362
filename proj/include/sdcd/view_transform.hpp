#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdcd/image.hpp"

namespace sdcd {

using Permutation = std::vector<std::size_t>;

/// One S x S block of an image, channels interleaved, rows contiguous.
struct Patch {
  std::size_t size = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Patch&, const Patch&) = default;
  friend auto operator<=>(const Patch& a, const Patch& b) { return a.pixels <=> b.pixels; }
};

/**
 * Everything needed to rebuild a shuffled view: patch side, the seed the
 * permutation came from, and the permutation itself. Output position i
 * holds input patch permutation[i].
 */
struct ShuffleSpec {
  std::size_t patch_size = 0;
  std::uint64_t seed = 0;
  Permutation permutation;

  std::size_t patch_count() const { return permutation.size(); }

  friend bool operator==(const ShuffleSpec&, const ShuffleSpec&) = default;
};

void to_json(nlohmann::json& j, const ShuffleSpec& spec);
void from_json(const nlohmann::json& j, ShuffleSpec& spec);

enum class PreprocessPolicy { kCrop, kResize };

std::size_t patch_count(const ImageGrid& image, std::size_t patch_size);

// Row-major patch order. Throws NonDivisibleDimensions.
std::vector<Patch> partition(const ImageGrid& image, std::size_t patch_size);

// Inverse of partition for a grid of patches_per_row x patches_per_col.
ImageGrid reassemble(const std::vector<Patch>& patches, std::size_t patches_per_col,
                     std::size_t patches_per_row);

/// Uniform permutation of {0..n-1} via Fisher-Yates over a seeded mt19937_64.
Permutation make_permutation(std::size_t n, std::uint64_t seed);

Permutation invert(const Permutation& permutation);
bool is_permutation_of_iota(const Permutation& permutation);

ShuffleSpec make_shuffle_spec(const ImageGrid& image, std::size_t patch_size, std::uint64_t seed);

// Throws SpecMismatch when the ShuffleSpec was built for a different patch count.
ImageGrid shuffle_patches(const ImageGrid& image, const ShuffleSpec& spec);

ImageGrid preprocess_to_grid(const ImageGrid& image, std::size_t patch_size,
                             PreprocessPolicy policy = PreprocessPolicy::kCrop);

ImageGrid resize_bilinear(const ImageGrid& image, std::size_t height, std::size_t width);

// Additive zero-mean Gaussian noise, clamped to [0, 255] and rounded.
ImageGrid gaussian_noise_view(const ImageGrid& image, double sigma, std::uint64_t seed);

}  // namespace sdcd
