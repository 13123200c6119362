#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "sdcd/error.hpp"
#include "sdcd/rng.hpp"
#include "sdcd/view_transform.hpp"

using namespace sdcd;

namespace {

ImageGrid random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> px(h * w * c);
  for (auto& p : px) p = static_cast<std::uint8_t>(rng() & 0xff);
  return ImageGrid(h, w, c, std::move(px));
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::kModelError;
}

}  // namespace

TEST_CASE("partition counts and order") {
  CHECK(partition(random_image(28, 28, 1, 1), 14).size() == 4);

  ImageGrid tiny(2, 2, 1, std::vector<std::uint8_t>{1, 2, 3, 4});
  const auto p = partition(tiny, 1);
  REQUIRE(p.size() == 4);
  for (std::uint8_t i = 0; i < 4; ++i) CHECK(p[i].pixels == std::vector<std::uint8_t>{static_cast<std::uint8_t>(i + 1)});

  const auto one = random_image(14, 14, 3, 2);
  const auto single = partition(one, 14);
  REQUIRE(single.size() == 1);
  CHECK(std::equal(single[0].pixels.begin(), single[0].pixels.end(), one.data().begin(), one.data().end()));

  CHECK(kind_of([] { partition(ImageGrid(30, 28, 1), 14); }) == ErrorKind::kNonDivisibleDimensions);
}

TEST_CASE("reassemble inverts partition") {
  const auto img = random_image(12, 18, 3, 3);
  CHECK(reassemble(partition(img, 6), 2, 3) == img);
  CHECK(kind_of([&] { reassemble(partition(img, 6), 2, 2); }) == ErrorKind::kSpecMismatch);
}

TEST_CASE("make_permutation") {
  CHECK(make_permutation(1, 99) == Permutation{0});
  CHECK(make_permutation(4, 7) == make_permutation(4, 7));
  CHECK(is_permutation_of_iota(make_permutation(64, 5)));
  CHECK(make_permutation(64, 5) != make_permutation(64, 6));
}

TEST_CASE("make_permutation is uniform over S_3") {
  std::map<Permutation, int> counts;
  for (std::uint64_t seed = 0; seed < 6000; ++seed) ++counts[make_permutation(3, seed)];
  CHECK(counts.size() == 6);
  for (const auto& [perm, n] : counts) CHECK(std::abs(n / 6000.0 - 1.0 / 6.0) <= 0.03);
}

TEST_CASE("shuffle with identity and reverse") {
  const auto img = random_image(8, 8, 1, 4);
  ShuffleSpec id{4, 0, {0, 1, 2, 3}};
  CHECK(shuffle_patches(img, id) == img);

  ShuffleSpec rev{4, 0, {3, 2, 1, 0}};
  const auto out = shuffle_patches(img, rev);
  // output patch (pr, pc) holds input patch 3 - (2 pr + pc)
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      const std::size_t dst = (r / 4) * 2 + c / 4;
      const std::size_t src = 3 - dst;
      CHECK(out.at(r, c) == img.at((src / 2) * 4 + r % 4, (src % 2) * 4 + c % 4));
    }
  }
}

TEST_CASE("shuffle spec mismatch") {
  const auto img = random_image(8, 8, 1, 4);
  CHECK(kind_of([&] { shuffle_patches(img, ShuffleSpec{4, 0, {0, 1, 2}}); }) == ErrorKind::kSpecMismatch);
  CHECK(kind_of([&] { shuffle_patches(img, ShuffleSpec{4, 0, {0, 0, 1, 2}}); }) == ErrorKind::kSpecMismatch);
}

TEST_CASE("property: conservation, bijectivity and inverse round trip") {
  Rng rng(2024);
  const std::size_t sides[] = {1, 2, 3, 4, 7};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t S = sides[uniform_below(rng, 5)];
    const std::size_t h = S * (1 + uniform_below(rng, 6));
    const std::size_t w = S * (1 + uniform_below(rng, 6));
    const std::size_t c = uniform_below(rng, 2) ? 3 : 1;
    const auto img = random_image(h, w, c, rng());
    const auto spec = make_shuffle_spec(img, S, rng());
    CHECK(spec.patch_count() == (h / S) * (w / S));
    auto sorted = spec.permutation;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);

    const auto out = shuffle_patches(img, spec);
    auto a = partition(img, S), b = partition(out, S);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);

    ShuffleSpec back = spec;
    back.permutation = invert(spec.permutation);
    CHECK(shuffle_patches(out, back) == img);
    // determinism: regenerating from the seed gives the same spec
    CHECK(make_shuffle_spec(img, S, spec.seed) == spec);
  }
}

TEST_CASE("shuffle spec json round trip and validation") {
  const auto spec = make_shuffle_spec(random_image(28, 28, 1, 5), 14, 77);
  nlohmann::json j = spec;
  CHECK(j.at("S") == 14);
  CHECK(j.at("N") == 4);
  CHECK(j.at("seed") == 77);
  CHECK(j.get<ShuffleSpec>() == spec);

  j["permutation"] = {0, 0, 1, 2};
  CHECK(kind_of([&] { (void)j.get<ShuffleSpec>(); }) == ErrorKind::kMalformedRecord);
  j["permutation"] = {0, 1, 2};
  CHECK(kind_of([&] { (void)j.get<ShuffleSpec>(); }) == ErrorKind::kMalformedRecord);
}

TEST_CASE("preprocess_to_grid") {
  const auto big = random_image(224, 224, 3, 6);
  CHECK(preprocess_to_grid(big, 14) == big);

  const auto odd = random_image(30, 30, 1, 7);
  const auto cropped = preprocess_to_grid(odd, 14, PreprocessPolicy::kCrop);
  CHECK(cropped.height() == 28);
  CHECK(cropped.width() == 28);
  CHECK(cropped.at(0, 0) == odd.at(1, 1));
  CHECK(cropped.at(27, 27) == odd.at(28, 28));

  const auto resized = preprocess_to_grid(random_image(30, 44, 1, 8), 14, PreprocessPolicy::kResize);
  CHECK(resized.height() == 28);
  CHECK(resized.width() == 42);

  CHECK(kind_of([] { preprocess_to_grid(ImageGrid(10, 10, 1), 14); }) == ErrorKind::kImageTooSmall);
}

TEST_CASE("resize_bilinear keeps constants and endpoints") {
  const auto flat = make_constant(7, 9, 90);
  const auto r = resize_bilinear(flat, 14, 3);
  for (auto v : r.data()) CHECK(v == 90);
  const auto same = random_image(5, 5, 3, 1);
  CHECK(resize_bilinear(same, 5, 5) == same);
}

TEST_CASE("gaussian noise view") {
  const auto img = random_image(16, 16, 3, 9);
  CHECK(gaussian_noise_view(img, 0.0, 5) == img);
  CHECK(gaussian_noise_view(img, 10.0, 5) == gaussian_noise_view(img, 10.0, 5));
  CHECK(gaussian_noise_view(img, 10.0, 5) != gaussian_noise_view(img, 10.0, 6));

  const auto noisy = gaussian_noise_view(make_constant(224, 224, 128), 25.0, 11);
  double mean = 0, sq = 0;
  const double n = static_cast<double>(noisy.data().size());
  for (auto v : noisy.data()) mean += v / n;
  for (auto v : noisy.data()) sq += (v - mean) * (v - mean) / n;
  const double sd = std::sqrt(sq);
  CHECK(sd >= 22.0);
  CHECK(sd <= 28.0);
  CHECK(std::abs(mean - 128.0) < 1.0);
}
