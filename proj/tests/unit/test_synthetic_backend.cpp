#include <doctest.h>

#include <cmath>

#include "oracle/oracle.hpp"
#include "sdcd/error.hpp"
#include "sdcd/rng.hpp"
#include "sdcd/synthetic_backend.hpp"
#include "sdcd/view_transform.hpp"

using namespace sdcd;

namespace {

ImageGrid random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> px(h * w * c);
  for (auto& p : px) p = static_cast<std::uint8_t>(rng() & 0xff);
  return ImageGrid(h, w, c, std::move(px));
}

SyntheticSceneSpec two_object_scene(double kappa = 0.0) {
  SyntheticSceneSpec scene;
  scene.texture_release = kappa;
  SyntheticObject dog;
  dog.name = "dog";
  dog.structural_weight = 1.0;
  dog.structural_template = make_gradient(56, 56, 0.0);
  dog.ground_truth_present = true;
  scene.objects.push_back(dog);
  SyntheticObject cat;
  cat.name = "cat";
  cat.texture_weight = 0.5;
  cat.texture_signature = texture_signature(make_gradient(56, 56, 0.0), 14, 8);
  scene.objects.push_back(cat);
  return scene;
}

TokenSequence probe(const SyntheticBackend& b, const std::string& obj) { return b.tokenize(probe_prompt(obj)); }

double margin(const LogitVector& l, const BackendDescriptor& d) { return l[d.yes_id] - l[d.no_id]; }

}  // namespace

TEST_CASE("structural coherence fixed points") {
  CHECK(structural_coherence(make_constant(28, 28, 77), 14) == 1.0);
  const double board = structural_coherence(make_checkerboard(28, 28, 14), 14);
  CHECK(board == doctest::Approx(1e-6 / (1e-6 + 255.0)).epsilon(1e-9));
  CHECK(board < 1e-8);
  CHECK_THROWS_AS(structural_coherence(make_constant(30, 28, 1), 14), Error);
}

TEST_CASE("coherence drops when an 8x8 gradient is shuffled") {
  const auto g = make_gradient(8, 8, 0.0);
  const ShuffleSpec spec{2, 0, {3, 2, 1, 0, 7, 6, 5, 4, 11, 10, 9, 8, 15, 14, 13, 12}};
  const auto s = shuffle_patches(g, spec);
  CHECK(structural_coherence(g, 2) == doctest::Approx(oracle::coherence(g, 2)).epsilon(1e-12));
  CHECK(structural_coherence(s, 2) == doctest::Approx(oracle::coherence(s, 2)).epsilon(1e-12));
  CHECK(structural_coherence(g, 2) > structural_coherence(s, 2));
}

TEST_CASE("texture signature examples") {
  // four 2x2 patches with means 0, 85, 170, 255
  ImageGrid img(4, 4, 1);
  const std::uint8_t means[4] = {0, 85, 170, 255};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) img.at(r, c) = means[(r / 2) * 2 + c / 2];
  CHECK(texture_signature(img, 2, 4) == std::vector<double>{0.25, 0.25, 0.25, 0.25});

  const auto flat = texture_signature(make_constant(28, 28, 200), 14, 8);
  CHECK(flat == std::vector<double>{0, 0, 0, 0, 0, 0, 1, 0});

  const auto any = random_image(42, 28, 3, 3);
  CHECK(texture_signature(any, 14, 8) == texture_signature(shuffle_patches(any, make_shuffle_spec(any, 14, 4)), 14, 8));
}

TEST_CASE("template and signature matching") {
  const auto g = make_gradient(28, 28, 0.0);
  CHECK(template_match(g, g) == doctest::Approx(1.0));
  CHECK(template_match(make_constant(28, 28, 3), g) == 0.0);
  // anti-correlated clamps to zero
  CHECK(template_match(make_gradient(28, 28, 180.0), g) == 0.0);
  // a template of a different size is resampled
  CHECK(template_match(g, make_gradient(56, 56, 0.0)) > 0.99);
  CHECK(signature_match({0.5, 0.5}, {0.5, 0.5}) == 1.0);
  CHECK(signature_match({1, 0}, {0, 1}) == 0.0);
  CHECK_THROWS_AS(signature_match({1}, {0.5, 0.5}), Error);
}

TEST_CASE("features agree with brute force") {
  SyntheticBackend b(two_object_scene(0.7));
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    auto img = gaussian_noise_view(make_gradient(56, 56, 30.0 * i), 8.0, rng());
    if (i % 2) img = shuffle_patches(img, make_shuffle_spec(img, 14, rng()));
    const auto f = b.features(img);
    CHECK(f.coherence == doctest::Approx(oracle::coherence(img, 14)).epsilon(1e-12));
    const auto& dog = b.scene().objects[0];
    const auto& cat = b.scene().objects[1];
    CHECK(f.structural_match[0] == doctest::Approx(oracle::ncc(img, *dog.structural_template)).epsilon(1e-12));
    CHECK(f.texture_match[1] == doctest::Approx(oracle::tv_match(oracle::signature(img, 14, 8), cat.texture_signature)));
    for (std::size_t k = 0; k < 2; ++k) {
      const oracle::ObjectWeights w{b.scene().objects[k].structural_weight, b.scene().objects[k].texture_weight,
                                    b.scene().objects[k].structural_template ? &*b.scene().objects[k].structural_template
                                                                               : nullptr,
                                    b.scene().objects[k].texture_signature};
      CHECK(b.yes_logit(k, f, 0.6) == doctest::Approx(oracle::yes_logit(img, w, 14, 8, 0.7, 0.6)).epsilon(1e-12));
    }
  }
}

TEST_CASE("vocabulary and tokenizer") {
  SyntheticBackend b(two_object_scene());
  const auto& d = b.descriptor();
  CHECK(d.vocab_size == 18);
  CHECK(d.yes_id == 0);
  CHECK(d.no_id == 1);
  CHECK(d.eos_id == 2);
  CHECK(d.supports_attention_boost);
  const auto t = b.tokenize("Is there a dog in the image?");
  CHECK(t.size() == 7);
  CHECK(t[3] == b.object_token(0));
  CHECK(b.render(t) == "is there a dog in the image");
  CHECK(b.tokenize("zebra")[0] == 3);
}

TEST_CASE("scene validation") {
  auto scene = two_object_scene();
  scene.objects[1].texture_weight = 0.0;
  CHECK_THROWS_AS(SyntheticBackend{scene}, Error);
  scene = two_object_scene();
  scene.objects[0].structural_template.reset();
  CHECK_THROWS_AS(SyntheticBackend{scene}, Error);
  scene = two_object_scene();
  scene.objects[1].name = "yes";
  CHECK_THROWS_AS(SyntheticBackend{scene}, Error);
  scene = two_object_scene();
  scene.objects[1].texture_signature.pop_back();
  CHECK_THROWS_AS(SyntheticBackend{scene}, Error);
}

TEST_CASE("scene json round trip") {
  const nlohmann::json doc = nlohmann::json::parse(R"({
    "analysis_patch_size": 14,
    "texture_bins": 8,
    "texture_release": 0.5,
    "objects": [
      {"name": "dog", "structural_weight": 1.0, "ground_truth_present": true,
       "structural_template": {"gradient": {"height": 28, "width": 28, "angle_deg": 0.0}}},
      {"name": "cat", "texture_weight": 0.5,
       "texture_signature": {"from_image": {"constant": {"height": 28, "width": 28, "value": 10}}}}
    ]
  })");
  const auto scene = scene_from_json(doc);
  CHECK(scene.texture_release == 0.5);
  CHECK(scene.objects[1].texture_signature[0] == 1.0);
  const auto again = scene_from_json(scene_to_json(scene));
  CHECK(*again.objects[0].structural_template == *scene.objects[0].structural_template);
  CHECK(again.objects[1].texture_signature == scene.objects[1].texture_signature);

  nlohmann::json bad = doc;
  bad["objects"][0].erase("structural_template");
  CHECK_THROWS_AS(scene_from_json(bad), Error);
}

TEST_CASE("probe logits follow the rule") {
  SyntheticBackend b(two_object_scene());
  const auto& d = b.descriptor();
  const auto img = make_gradient(56, 56, 0.0);
  const auto v = b.encode_view(img, 0.6, ViewLabel::kOriginal);
  const auto l = b.next_token_logits(v, probe(b, "dog"));
  CHECK(l.size() == d.vocab_size);
  CHECK(l[d.yes_id] > l[d.no_id]);
  CHECK(l[d.yes_id] + l[d.no_id] == doctest::Approx(1.0));
  for (std::size_t t = 0; t < l.size(); ++t) {
    if (t != static_cast<std::size_t>(d.yes_id) && t != static_cast<std::size_t>(d.no_id)) CHECK(l[t] == -100.0);
  }
  // deterministic, and re-encoding gives the same logits
  CHECK(b.next_token_logits(v, probe(b, "dog")) == l);
  CHECK(b.next_token_logits(b.encode_view(img, 0.6, ViewLabel::kOriginal), probe(b, "dog")) == l);

  const auto shuffled = shuffle_patches(img, make_shuffle_spec(img, 14, 1));
  const auto ls = b.next_token_logits(b.encode_view(shuffled, 0.6, ViewLabel::kShuffled), probe(b, "dog"));
  CHECK(ls[d.yes_id] < l[d.yes_id]);

  // after an answer the only live token is EOS
  auto answered = probe(b, "dog");
  answered.push_back(d.yes_id);
  const auto after = b.next_token_logits(v, answered);
  CHECK(after[d.eos_id] == 0.0);
  CHECK(after[d.yes_id] == -100.0);
}

TEST_CASE("texture invariance with the literal rule") {
  SyntheticBackend b(two_object_scene(0.0));
  const auto& d = b.descriptor();
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto img = random_image(56, 56, 1, rng());
    const auto base = b.next_token_logits(b.encode_view(img, 0.6, ViewLabel::kOriginal), probe(b, "cat"));
    const auto sh = shuffle_patches(img, make_shuffle_spec(img, 14, rng()));
    const auto other = b.next_token_logits(b.encode_view(sh, 0.6, ViewLabel::kShuffled), probe(b, "cat"));
    CHECK(other[d.yes_id] == base[d.yes_id]);
  }
}

TEST_CASE("texture release lifts baits on incoherent views") {
  SyntheticBackend b(two_object_scene(1.0));
  const auto& d = b.descriptor();
  const auto img = make_gradient(56, 56, 0.0);
  const auto sh = shuffle_patches(img, make_shuffle_spec(img, 14, 2));
  const double m = margin(b.next_token_logits(b.encode_view(img, 0.6, ViewLabel::kOriginal), probe(b, "cat")), d);
  const double ms = margin(b.next_token_logits(b.encode_view(sh, 0.6, ViewLabel::kShuffled), probe(b, "cat")), d);
  CHECK(ms > m);
}

TEST_CASE("monotonicity in coherence and boost") {
  SyntheticBackend b(two_object_scene(0.0));
  SyntheticFeatures f;
  f.structural_match = {0.8, 0.0};
  f.texture_match = {0.0, 0.6};
  double prev = -1.0;
  for (double c = 0.0; c <= 1.0; c += 0.05) {
    f.coherence = c;
    const double y = b.yes_logit(0, f, 0.6);
    CHECK(y >= prev);
    prev = y;
  }
  f.coherence = 0.4;
  prev = -1.0;
  for (double g = 0.0; g <= 3.0; g += 0.25) {
    const double y = b.yes_logit(1, f, g);
    CHECK(y >= prev);
    prev = y;
  }
}

TEST_CASE("errors: context, handles, boost") {
  SyntheticBackend b(two_object_scene(), 8);
  SyntheticBackend other(two_object_scene());
  const auto img = make_gradient(56, 56, 0.0);
  const auto v = b.encode_view(img, 0.0, ViewLabel::kOriginal);
  TokenSequence long_prefix(9, 4);
  try {
    b.next_token_logits(v, long_prefix);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kContextOverflow);
  }
  try {
    other.next_token_logits(v, probe(other, "dog"));
    FAIL("expected invalid handle");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidHandle);
  }
  CHECK_THROWS_AS(b.encode_view(img, -0.1, ViewLabel::kOriginal), Error);
}

TEST_CASE("caption prompt lists objects with positive margin, best first") {
  auto scene = two_object_scene(0.0);
  SyntheticBackend b(scene);
  const auto& d = b.descriptor();
  const auto img = make_gradient(56, 56, 0.0);
  const auto v = b.encode_view(img, 0.6, ViewLabel::kOriginal);
  auto prefix = b.tokenize(kCaptionPrompt);
  const auto l = b.next_token_logits(v, prefix);
  CHECK(l[d.eos_id] == 0.0);
  const auto f = b.features(img);
  for (std::size_t k = 0; k < 2; ++k) {
    const double y = static_cast<float>(b.yes_logit(k, f, 0.6));
    CHECK(l[b.object_token(k)] == doctest::Approx(y - (1.0 - y)));
  }
  // once mentioned, an object drops back to filler
  prefix.push_back(b.object_token(0));
  CHECK(b.next_token_logits(v, prefix)[b.object_token(0)] == -100.0);
}
