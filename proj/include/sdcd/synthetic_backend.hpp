#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdcd/backend.hpp"
#include "sdcd/image.hpp"

namespace sdcd {

/**
 * Ratio W_in / (W_in + B) of mean absolute intensity differences between
 * adjacent pixels strictly inside S x S patches (W_in, floored at 1e-6)
 * and across patch boundaries (B). 1.0 for a constant image, near 0 when
 * every boundary is a hard edge.
 */
double structural_coherence(const ImageGrid& image, std::size_t patch_size);

inline constexpr double kCoherenceEpsilon = 1e-6;

// Normalized histogram of per-patch mean intensities; invariant under any
// permutation of S x S patches.
std::vector<double> texture_signature(const ImageGrid& image, std::size_t patch_size, std::size_t bins);

// max(0, normalized cross-correlation) of channel-mean intensities. The
// template is resized bilinearly when its dimensions differ.
double template_match(const ImageGrid& image, const ImageGrid& structural_template);

// 1 - total variation distance between two histograms of equal length.
double signature_match(const std::vector<double>& a, const std::vector<double>& b);

struct SyntheticObject {
  std::string name;
  double structural_weight = 0.0;
  double texture_weight = 0.0;
  std::optional<ImageGrid> structural_template;
  std::vector<double> texture_signature;
  bool ground_truth_present = false;
  // How the template was declared, kept for round-tripping scene files.
  nlohmann::json template_source;
};

struct SyntheticSceneSpec {
  std::vector<SyntheticObject> objects;
  // Patch side at which coherence and texture statistics are measured.
  std::size_t analysis_patch_size = 14;
  std::size_t texture_bins = 8;
  // Extra reliance on texture as structure disappears: the texture term is
  // scaled by 1 + texture_release * (1 - coherence). 0 keeps it constant.
  double texture_release = 0.0;
  // logit(NO) = no_offset - logit(YES).
  double no_offset = 1.0;

  void validate() const;
  const SyntheticObject* find(std::string_view name) const;
};

// Scene documents are JSON; relative template paths resolve against base_dir.
SyntheticSceneSpec scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json scene_to_json(const SyntheticSceneSpec& scene);
SyntheticSceneSpec load_scene(const std::filesystem::path& path);

// {"path": ...} | {"gradient": {...}} | {"checkerboard": {...}} | {"constant": {...}}
ImageGrid image_from_source(const nlohmann::json& source, const std::filesystem::path& base_dir = {});

/// Per-view statistics the synthetic logit rule consumes.
struct SyntheticFeatures {
  double coherence = 1.0;
  std::vector<double> structural_match;  // m_s per object
  std::vector<double> texture_match;     // m_t per object
};

/**
 * Deterministic stand-in for a vision-language model. For a probe about
 * object o on a view with boost g:
 *
 *   logit(YES) = (1+g) * [w_s * coherence * m_s + w_t * m_t * (1 + k * (1 - coherence))]
 *   logit(NO)  = no_offset - logit(YES)
 *
 * with every other token pinned at kFillerLogit. Caption prompts emit each
 * not-yet-mentioned object whose YES-NO margin is positive, best first,
 * then EOS (EOS sits at logit 0, objects at their margin).
 */
class SyntheticBackend final : public Backend {
 public:
  static constexpr double kFillerLogit = -100.0;
  static constexpr std::size_t kMaxVocab = 64;

  explicit SyntheticBackend(SyntheticSceneSpec scene, std::size_t context_limit = 1024);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  ViewHandle encode_view(const ImageGrid& image, double attention_boost, ViewLabel label) override;
  LogitVector next_token_logits(const ViewHandle& view, std::span<const TokenId> prefix) override;

  TokenSequence tokenize(std::string_view text) const override;
  std::string render(std::span<const TokenId> tokens) const override;

  const SyntheticSceneSpec& scene() const { return scene_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  TokenId object_token(std::size_t object_index) const { return first_object_token_ + static_cast<TokenId>(object_index); }

  SyntheticFeatures features(const ImageGrid& image) const;
  // logit(YES) for one object under precomputed features.
  double yes_logit(std::size_t object_index, const SyntheticFeatures& f, double attention_boost) const;

 private:
  std::optional<std::size_t> probed_object(std::span<const TokenId> prefix, std::size_t& answer_start) const;

  SyntheticSceneSpec scene_;
  BackendDescriptor descriptor_;
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, TokenId> token_of_;
  TokenId first_object_token_ = 0;
  TokenId unk_id_ = 0;
};

}  // namespace sdcd
