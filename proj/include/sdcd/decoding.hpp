#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdcd/backend.hpp"
#include "sdcd/image.hpp"
#include "sdcd/rng.hpp"
#include "sdcd/view_transform.hpp"

namespace sdcd {

enum class SamplingMode { kGreedy, kNucleus };
enum class NegativeView { kShuffle, kNoise, kNone };

std::string_view to_string(SamplingMode mode);
std::string_view to_string(NegativeView view);
SamplingMode sampling_mode_from_string(std::string_view text);
NegativeView negative_view_from_string(std::string_view text);

struct DecodingConfig {
  double alpha = 2.0;
  double beta = 0.1;
  double attention_boost = 0.6;
  // Apply attention_boost to the negative view as well as the original.
  bool boost_negative_view = true;
  SamplingMode sampling = SamplingMode::kGreedy;
  double temperature = 1.0;
  double top_p = 0.9;
  std::size_t max_new_tokens = 512;
  std::uint64_t sampling_seed = 0;
  std::size_t shuffle_patch_size = 14;
  std::uint64_t shuffle_seed = 0;
  NegativeView negative_view = NegativeView::kShuffle;
  double noise_sigma = 25.0;

  // Throws Config on any out-of-range field.
  void validate() const;

  friend bool operator==(const DecodingConfig&, const DecodingConfig&) = default;
};

void to_json(nlohmann::json& j, const DecodingConfig& c);
// Overlays the keys present in j onto c; unknown keys are a Config error.
void merge_config(const nlohmann::json& j, DecodingConfig& c);

// a + alpha * (a - b), i.e. (1 + alpha) * a - alpha * b, evaluated so that
// alpha == 0 and a == b both return a exactly. Throws LengthMismatch.
LogitVector sdcd_calibrate(std::span<const double> logits_original, std::span<const double> logits_negative,
                           double alpha);

std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

// Keeps y iff p(y) >= beta * max p under softmax(logits_original). The
// argmax always survives for beta in [0, 1].
std::vector<bool> plausibility_mask(std::span<const double> logits_original, double beta);

// softmax(calibrated / temperature) over unmasked tokens; masked tokens get
// exactly 0. Throws EmptyCandidateSet when nothing is unmasked.
std::vector<double> masked_distribution(std::span<const double> calibrated, const std::vector<bool>& mask,
                                        double temperature);

// Greedy: argmax, lowest id on ties. Nucleus: smallest prefix of the
// probability-sorted tokens with mass >= top_p, renormalised, one draw.
TokenId sample_token(std::span<const double> distribution, SamplingMode mode, double top_p, Rng& rng);

struct TraceStep {
  LogitVector logits_original;
  LogitVector logits_negative;  // empty for single-view decoding
  std::vector<bool> mask;
  std::vector<double> distribution;
  TokenId token = 0;
};

enum class StopReason { kEos, kMaxNewTokens };

struct TraceHeader {
  bool contrastive = true;
  DecodingConfig config;
  std::optional<ShuffleSpec> shuffle;
  TokenSequence prompt;
  BackendDescriptor backend;
};

struct GenerationTrace {
  TraceHeader header;
  std::vector<TraceStep> steps;
  TokenSequence tokens;  // sampled tokens, EOS excluded
  StopReason stop = StopReason::kEos;
};

struct GenerationResult {
  TokenSequence tokens;
  GenerationTrace trace;
};

// Builds V' for config.negative_view; shuffle_out receives the ShuffleSpec used.
ImageGrid build_negative_view(const ImageGrid& image, const DecodingConfig& config,
                              std::optional<ShuffleSpec>* shuffle_out = nullptr);

/**
 * Dual-view contrastive generation. V and V' are each encoded once; every
 * step feeds the same prefix to both, calibrates, masks on the original
 * view, and samples. negative_view == kNone degrades to single-view.
 */
GenerationResult generate(Backend& backend, const ImageGrid& image, const TokenSequence& prompt,
                          const DecodingConfig& config);

// As generate, with V' supplied by the caller (shared across sweep rows).
GenerationResult generate_with_negative(Backend& backend, const ImageGrid& image, const ImageGrid& negative,
                                        const std::optional<ShuffleSpec>& shuffle, const TokenSequence& prompt,
                                        const DecodingConfig& config);

// Single-view decoding with the same mask, temperature and sampler.
GenerationResult regular_generate(Backend& backend, const ImageGrid& image, const TokenSequence& prompt,
                                  const DecodingConfig& config);

// Re-derives the token sequence from stored logits and seeds.
TokenSequence replay(const GenerationTrace& trace);

// Line-delimited JSON: one header record, one record per step, one end record.
void write_trace(const GenerationTrace& trace, const std::filesystem::path& path);
std::string serialize_trace(const GenerationTrace& trace);
GenerationTrace parse_trace(std::string_view text);
GenerationTrace read_trace(const std::filesystem::path& path);

}  // namespace sdcd
