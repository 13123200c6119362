#include "sdcd/synthetic_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "sdcd/error.hpp"
#include "sdcd/view_transform.hpp"

namespace sdcd {

namespace {

void require_divisible(const ImageGrid& image, std::size_t patch_size) {
  if (patch_size == 0 || image.height() % patch_size != 0 || image.width() % patch_size != 0) {
    throw Error(ErrorKind::kNonDivisibleDimensions,
                "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                    " is not divisible by S=" + std::to_string(patch_size));
  }
}

const std::vector<std::string>& fixed_words() {
  static const std::vector<std::string> words = {
      "yes", "no", "<eos>", "<unk>", "is", "there", "a", "an", "in", "the", "image",
      "please", "help", "me", "describe", "detail"};
  return words;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isalnum(ch) || raw == '<' || raw == '>' || raw == '_') {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

double structural_coherence(const ImageGrid& image, std::size_t patch_size) {
  require_divisible(image, patch_size);
  double inside_sum = 0.0, boundary_sum = 0.0;
  std::size_t inside_n = 0, boundary_n = 0;
  const std::size_t h = image.height(), w = image.width();
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double here = image.intensity(r, c);
      if (c + 1 < w) {
        const double d = std::abs(here - image.intensity(r, c + 1));
        if ((c + 1) % patch_size == 0) {
          boundary_sum += d;
          ++boundary_n;
        } else {
          inside_sum += d;
          ++inside_n;
        }
      }
      if (r + 1 < h) {
        const double d = std::abs(here - image.intensity(r + 1, c));
        if ((r + 1) % patch_size == 0) {
          boundary_sum += d;
          ++boundary_n;
        } else {
          inside_sum += d;
          ++inside_n;
        }
      }
    }
  }
  const double inside = std::max(inside_n ? inside_sum / static_cast<double>(inside_n) : 0.0, kCoherenceEpsilon);
  const double boundary = boundary_n ? boundary_sum / static_cast<double>(boundary_n) : 0.0;
  return inside / (inside + boundary);
}

std::vector<double> texture_signature(const ImageGrid& image, std::size_t patch_size, std::size_t bins) {
  require_divisible(image, patch_size);
  if (bins == 0) throw Error(ErrorKind::kInvalidArgument, "texture signature needs at least one bin");
  const std::size_t rows = image.height() / patch_size;
  const std::size_t cols = image.width() / patch_size;
  std::vector<double> hist(bins, 0.0);
  const double per_patch = static_cast<double>(patch_size * patch_size * image.channels());
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      double sum = 0.0;
      for (std::size_t y = 0; y < patch_size; ++y) {
        for (std::size_t x = 0; x < patch_size; ++x) {
          for (std::size_t ch = 0; ch < image.channels(); ++ch) {
            sum += image.at(pr * patch_size + y, pc * patch_size + x, ch);
          }
        }
      }
      const double mean = sum / per_patch;
      const auto bin = std::min(bins - 1, static_cast<std::size_t>(mean * static_cast<double>(bins) / 256.0));
      hist[bin] += 1.0;
    }
  }
  const double total = static_cast<double>(rows * cols);
  for (double& v : hist) v /= total;
  return hist;
}

double template_match(const ImageGrid& image, const ImageGrid& structural_template) {
  const ImageGrid* templ = &structural_template;
  ImageGrid resized;
  if (templ->height() != image.height() || templ->width() != image.width()) {
    resized = resize_bilinear(structural_template, image.height(), image.width());
    templ = &resized;
  }
  const std::size_t n = image.height() * image.width();
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      mean_a += image.intensity(r, c);
      mean_b += templ->intensity(r, c);
    }
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      const double a = image.intensity(r, c) - mean_a;
      const double b = templ->intensity(r, c) - mean_b;
      cov += a * b;
      var_a += a * a;
      var_b += b * b;
    }
  }
  if (var_a <= 0.0 || var_b <= 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(var_a * var_b), 0.0, 1.0);
}

double signature_match(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kLengthMismatch, "texture signatures differ in length");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return std::clamp(1.0 - 0.5 * tv, 0.0, 1.0);
}

void SyntheticSceneSpec::validate() const {
  if (analysis_patch_size == 0) throw Error(ErrorKind::kConfig, "analysis_patch_size must be >= 1");
  if (texture_bins == 0) throw Error(ErrorKind::kConfig, "texture_bins must be >= 1");
  if (!(texture_release >= 0.0)) throw Error(ErrorKind::kConfig, "texture_release must be >= 0");
  for (const auto& o : objects) {
    if (o.name.empty() || split_words(o.name) != std::vector<std::string>{o.name}) {
      throw Error(ErrorKind::kConfig, "object name '" + o.name + "' must be a single lowercase word");
    }
    if (std::find(fixed_words().begin(), fixed_words().end(), o.name) != fixed_words().end()) {
      throw Error(ErrorKind::kConfig, "object name '" + o.name + "' collides with a reserved word");
    }
    if (!(o.structural_weight >= 0.0) || !(o.texture_weight >= 0.0) ||
        !(o.structural_weight + o.texture_weight > 0.0)) {
      throw Error(ErrorKind::kConfig, "object '" + o.name + "' needs w_s >= 0, w_t >= 0, w_s + w_t > 0");
    }
    if (o.structural_weight > 0.0 && !o.structural_template) {
      throw Error(ErrorKind::kConfig, "object '" + o.name + "' has w_s > 0 but no structural template");
    }
    if (o.texture_weight > 0.0 && o.texture_signature.size() != texture_bins) {
      throw Error(ErrorKind::kConfig, "object '" + o.name + "' texture signature must have " +
                                          std::to_string(texture_bins) + " bins");
    }
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t k = i + 1; k < objects.size(); ++k) {
      if (objects[i].name == objects[k].name) throw Error(ErrorKind::kConfig, "duplicate object " + objects[i].name);
    }
  }
}

const SyntheticObject* SyntheticSceneSpec::find(std::string_view name) const {
  for (const auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

ImageGrid image_from_source(const nlohmann::json& source, const std::filesystem::path& base_dir) {
  if (source.contains("path")) {
    std::filesystem::path p = source.at("path").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    return read_image(p);
  }
  if (source.contains("gradient")) {
    const auto& g = source.at("gradient");
    return make_gradient(g.at("height").get<std::size_t>(), g.at("width").get<std::size_t>(),
                         g.value("angle_deg", 0.0), g.value("low", 0.0), g.value("high", 255.0),
                         g.value("channels", std::size_t{1}));
  }
  if (source.contains("checkerboard")) {
    const auto& g = source.at("checkerboard");
    return make_checkerboard(g.at("height").get<std::size_t>(), g.at("width").get<std::size_t>(),
                             g.at("cell").get<std::size_t>(), g.value("low", std::uint8_t{0}),
                             g.value("high", std::uint8_t{255}), g.value("channels", std::size_t{1}));
  }
  if (source.contains("constant")) {
    const auto& g = source.at("constant");
    return make_constant(g.at("height").get<std::size_t>(), g.at("width").get<std::size_t>(),
                         g.at("value").get<std::uint8_t>(), g.value("channels", std::size_t{1}));
  }
  throw Error(ErrorKind::kConfig, "image source needs one of path/gradient/checkerboard/constant");
}

SyntheticSceneSpec scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  SyntheticSceneSpec scene;
  try {
    scene.analysis_patch_size = j.value("analysis_patch_size", scene.analysis_patch_size);
    scene.texture_bins = j.value("texture_bins", scene.texture_bins);
    scene.texture_release = j.value("texture_release", scene.texture_release);
    scene.no_offset = j.value("no_offset", scene.no_offset);
    for (const auto& jo : j.at("objects")) {
      SyntheticObject o;
      o.name = jo.at("name").get<std::string>();
      o.structural_weight = jo.value("structural_weight", 0.0);
      o.texture_weight = jo.value("texture_weight", 0.0);
      o.ground_truth_present = jo.value("ground_truth_present", false);
      if (jo.contains("structural_template")) {
        o.template_source = jo.at("structural_template");
        o.structural_template = image_from_source(o.template_source, base_dir);
      }
      if (jo.contains("texture_signature")) {
        const auto& sig = jo.at("texture_signature");
        if (sig.is_array()) {
          o.texture_signature = sig.get<std::vector<double>>();
        } else {
          // {"from_image": <image source>} measures the signature from an image.
          const auto img = image_from_source(sig.at("from_image"), base_dir);
          o.texture_signature = texture_signature(img, scene.analysis_patch_size, scene.texture_bins);
        }
      }
      scene.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("scene document: ") + e.what());
  }
  scene.validate();
  return scene;
}

nlohmann::json scene_to_json(const SyntheticSceneSpec& scene) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    nlohmann::json jo = {{"name", o.name},
                         {"structural_weight", o.structural_weight},
                         {"texture_weight", o.texture_weight},
                         {"ground_truth_present", o.ground_truth_present}};
    if (!o.template_source.is_null()) jo["structural_template"] = o.template_source;
    if (!o.texture_signature.empty()) jo["texture_signature"] = o.texture_signature;
    objects.push_back(std::move(jo));
  }
  return {{"analysis_patch_size", scene.analysis_patch_size},
          {"texture_bins", scene.texture_bins},
          {"texture_release", scene.texture_release},
          {"no_offset", scene.no_offset},
          {"objects", std::move(objects)}};
}

SyntheticSceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open scene " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  return scene_from_json(j, path.parent_path());
}

SyntheticBackend::SyntheticBackend(SyntheticSceneSpec scene, std::size_t context_limit)
    : scene_(std::move(scene)) {
  scene_.validate();
  vocabulary_ = fixed_words();
  first_object_token_ = static_cast<TokenId>(vocabulary_.size());
  for (const auto& o : scene_.objects) vocabulary_.push_back(o.name);
  if (vocabulary_.size() > kMaxVocab) {
    throw Error(ErrorKind::kConfig, "synthetic vocabulary exceeds " + std::to_string(kMaxVocab) + " tokens");
  }
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) token_of_[vocabulary_[i]] = static_cast<TokenId>(i);
  unk_id_ = token_of_.at("<unk>");
  descriptor_ = BackendDescriptor{"synthetic", vocabulary_.size(), token_of_.at("yes"), token_of_.at("no"),
                                  token_of_.at("<eos>"), context_limit, true};
}

SyntheticFeatures SyntheticBackend::features(const ImageGrid& image) const {
  SyntheticFeatures f;
  f.coherence = structural_coherence(image, scene_.analysis_patch_size);
  const auto signature = texture_signature(image, scene_.analysis_patch_size, scene_.texture_bins);
  for (const auto& o : scene_.objects) {
    f.structural_match.push_back(o.structural_template ? template_match(image, *o.structural_template) : 0.0);
    f.texture_match.push_back(o.texture_signature.empty() ? 0.0 : signature_match(signature, o.texture_signature));
  }
  return f;
}

double SyntheticBackend::yes_logit(std::size_t object_index, const SyntheticFeatures& f, double attention_boost) const {
  const auto& o = scene_.objects.at(object_index);
  const double structural = o.structural_weight * f.coherence * f.structural_match[object_index];
  const double texture = o.texture_weight * f.texture_match[object_index] *
                         (1.0 + scene_.texture_release * (1.0 - f.coherence));
  return (1.0 + attention_boost) * (structural + texture);
}

ViewHandle SyntheticBackend::encode_view(const ImageGrid& image, double attention_boost, ViewLabel label) {
  if (!(attention_boost >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "attention boost must be >= 0");
  auto payload = std::make_shared<const SyntheticFeatures>(features(image));
  return ViewHandle{instance_id(), std::string(to_string(label)), label, attention_boost, std::move(payload)};
}

std::optional<std::size_t> SyntheticBackend::probed_object(std::span<const TokenId> prefix,
                                                           std::size_t& answer_start) const {
  // is there a|an <object> in the image
  static const char* const kShape[] = {"is", "there", nullptr, nullptr, "in", "the", "image"};
  if (prefix.size() < 7) return std::nullopt;
  for (std::size_t i = 0; i < 7; ++i) {
    if (i == 2) {
      if (prefix[i] != token_of_.at("a") && prefix[i] != token_of_.at("an")) return std::nullopt;
    } else if (i != 3 && prefix[i] != token_of_.at(kShape[i])) {
      return std::nullopt;
    }
  }
  const TokenId obj = prefix[3];
  if (obj < first_object_token_ || static_cast<std::size_t>(obj) >= vocabulary_.size()) return std::nullopt;
  answer_start = 7;
  return static_cast<std::size_t>(obj - first_object_token_);
}

LogitVector SyntheticBackend::next_token_logits(const ViewHandle& view, std::span<const TokenId> prefix) {
  check_handle(view);
  if (prefix.size() > descriptor_.context_limit) {
    throw Error(ErrorKind::kContextOverflow, "prefix of " + std::to_string(prefix.size()) +
                                                 " tokens exceeds context limit " +
                                                 std::to_string(descriptor_.context_limit));
  }
  const auto& f = *std::static_pointer_cast<const SyntheticFeatures>(view.payload);
  LogitVector logits(descriptor_.vocab_size, kFillerLogit);

  std::size_t answer_start = 0;
  if (auto obj = probed_object(prefix, answer_start)) {
    const bool answered = std::any_of(prefix.begin() + static_cast<std::ptrdiff_t>(answer_start), prefix.end(),
                                      [&](TokenId t) { return t == descriptor_.yes_id || t == descriptor_.no_id; });
    if (answered) {
      logits[descriptor_.eos_id] = 0.0;
    } else {
      const double yes = quantize(yes_logit(*obj, f, view.attention_boost));
      logits[descriptor_.yes_id] = yes;
      logits[descriptor_.no_id] = quantize(scene_.no_offset - yes);
    }
    return logits;
  }

  logits[descriptor_.eos_id] = 0.0;
  for (std::size_t i = 0; i < scene_.objects.size(); ++i) {
    const TokenId tok = object_token(i);
    if (std::find(prefix.begin(), prefix.end(), tok) != prefix.end()) continue;
    const double yes = quantize(yes_logit(i, f, view.attention_boost));
    logits[tok] = quantize(yes - (scene_.no_offset - yes));
  }
  return logits;
}

TokenSequence SyntheticBackend::tokenize(std::string_view text) const {
  TokenSequence out;
  for (const auto& w : split_words(text)) {
    const auto it = token_of_.find(w);
    out.push_back(it == token_of_.end() ? unk_id_ : it->second);
  }
  return out;
}

std::string SyntheticBackend::render(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (!out.empty()) out += ' ';
    out += (t >= 0 && static_cast<std::size_t>(t) < vocabulary_.size()) ? vocabulary_[t] : "<?>";
  }
  return out;
}

}  // namespace sdcd
