#include "sdcd/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sdcd/error.hpp"

namespace sdcd {

std::string_view to_string(SamplingMode mode) { return mode == SamplingMode::kGreedy ? "greedy" : "nucleus"; }

std::string_view to_string(NegativeView view) {
  switch (view) {
    case NegativeView::kShuffle: return "shuffle";
    case NegativeView::kNoise: return "noise";
    case NegativeView::kNone: return "none";
  }
  return "shuffle";
}

SamplingMode sampling_mode_from_string(std::string_view text) {
  if (text == "greedy") return SamplingMode::kGreedy;
  if (text == "nucleus") return SamplingMode::kNucleus;
  throw Error(ErrorKind::kConfig, "sampling must be greedy or nucleus, got '" + std::string(text) + "'");
}

NegativeView negative_view_from_string(std::string_view text) {
  if (text == "shuffle") return NegativeView::kShuffle;
  if (text == "noise") return NegativeView::kNoise;
  if (text == "none") return NegativeView::kNone;
  throw Error(ErrorKind::kConfig, "negative_view must be shuffle, noise or none, got '" + std::string(text) + "'");
}

void DecodingConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfig, what); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be a finite value >= 0");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (!(attention_boost >= 0.0) || !std::isfinite(attention_boost)) fail("gamma must be a finite value >= 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p must lie in (0, 1]");
  if (shuffle_patch_size == 0) fail("shuffle size S must be >= 1");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
}

void to_json(nlohmann::json& j, const DecodingConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha},
                     {"beta", c.beta},
                     {"gamma", c.attention_boost},
                     {"boost_negative_view", c.boost_negative_view},
                     {"sampling", std::string(to_string(c.sampling))},
                     {"temperature", c.temperature},
                     {"top_p", c.top_p},
                     {"max_new_tokens", c.max_new_tokens},
                     {"sampling_seed", c.sampling_seed},
                     {"shuffle_size", c.shuffle_patch_size},
                     {"shuffle_seed", c.shuffle_seed},
                     {"negative_view", std::string(to_string(c.negative_view))},
                     {"noise_sigma", c.noise_sigma}};
}

void merge_config(const nlohmann::json& j, DecodingConfig& c) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "decoding config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "gamma") c.attention_boost = value.get<double>();
      else if (key == "boost_negative_view") c.boost_negative_view = value.get<bool>();
      else if (key == "sampling") c.sampling = sampling_mode_from_string(value.get<std::string>());
      else if (key == "temperature") c.temperature = value.get<double>();
      else if (key == "top_p") c.top_p = value.get<double>();
      else if (key == "max_new_tokens") c.max_new_tokens = value.get<std::size_t>();
      else if (key == "sampling_seed") c.sampling_seed = value.get<std::uint64_t>();
      else if (key == "shuffle_size") c.shuffle_patch_size = value.get<std::size_t>();
      else if (key == "shuffle_seed") c.shuffle_seed = value.get<std::uint64_t>();
      else if (key == "negative_view") c.negative_view = negative_view_from_string(value.get<std::string>());
      else if (key == "noise_sigma") c.noise_sigma = value.get<double>();
      else throw Error(ErrorKind::kConfig, "unknown decoding config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("decoding config: ") + e.what());
  }
}

LogitVector sdcd_calibrate(std::span<const double> logits_original, std::span<const double> logits_negative,
                           double alpha) {
  if (logits_original.size() != logits_negative.size()) {
    throw Error(ErrorKind::kLengthMismatch, "original view has " + std::to_string(logits_original.size()) +
                                                " logits, negative view " + std::to_string(logits_negative.size()));
  }
  if (!(alpha >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "alpha must be >= 0");
  LogitVector out(logits_original.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = logits_original[i] + alpha * (logits_original[i] - logits_negative[i]);
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double top = *std::max_element(logits.begin(), logits.end()) / temperature;
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - top);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<bool> plausibility_mask(std::span<const double> logits_original, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "beta must lie in [0, 1]");
  std::vector<bool> keep(logits_original.size(), false);
  if (logits_original.empty()) return keep;
  const double top = *std::max_element(logits_original.begin(), logits_original.end());
  // p(y) / max p = exp(logit(y) - max logit); the partition function cancels.
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = std::exp(logits_original[i] - top) >= beta;
  return keep;
}

std::vector<double> masked_distribution(std::span<const double> calibrated, const std::vector<bool>& mask,
                                        double temperature) {
  if (calibrated.size() != mask.size()) throw Error(ErrorKind::kLengthMismatch, "mask length differs from logits");
  if (!(temperature > 0.0)) throw Error(ErrorKind::kInvalidArgument, "temperature must be > 0");
  constexpr double kMasked = -std::numeric_limits<double>::infinity();
  std::vector<double> scaled(calibrated.size());
  double top = kMasked;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled[i] = mask[i] ? calibrated[i] / temperature : kMasked;
    top = std::max(top, scaled[i]);
  }
  if (top == kMasked) throw Error(ErrorKind::kEmptyCandidateSet, "every token is masked");
  std::vector<double> p(scaled.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask[i]) {
      p[i] = std::exp(scaled[i] - top);
      sum += p[i];
    }
  }
  for (double& v : p) v /= sum;
  return p;
}

TokenId sample_token(std::span<const double> distribution, SamplingMode mode, double top_p, Rng& rng) {
  if (distribution.empty()) throw Error(ErrorKind::kDegenerateDistribution, "empty distribution");
  double total = 0.0;
  for (double v : distribution) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::kDegenerateDistribution, "distribution has NaN or negative mass");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw Error(ErrorKind::kDegenerateDistribution, "distribution sums to " + std::to_string(total));
  }

  if (mode == SamplingMode::kGreedy) {
    return static_cast<TokenId>(std::max_element(distribution.begin(), distribution.end()) - distribution.begin());
  }

  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "top_p must lie in (0, 1]");
  std::vector<TokenId> order;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    if (distribution[i] > 0.0) order.push_back(static_cast<TokenId>(i));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return distribution[a] > distribution[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += distribution[order[keep]];
    ++keep;
    if (mass >= top_p) break;
  }
  const double u = uniform_unit(rng) * mass;
  double acc = 0.0;
  for (std::size_t k = 0; k < keep; ++k) {
    acc += distribution[order[k]];
    if (u < acc) return order[k];
  }
  return order[keep - 1];
}

ImageGrid build_negative_view(const ImageGrid& image, const DecodingConfig& config,
                              std::optional<ShuffleSpec>* shuffle_out) {
  switch (config.negative_view) {
    case NegativeView::kShuffle: {
      auto spec = make_shuffle_spec(image, config.shuffle_patch_size, config.shuffle_seed);
      auto view = shuffle_patches(image, spec);
      if (shuffle_out) *shuffle_out = std::move(spec);
      return view;
    }
    case NegativeView::kNoise:
      if (shuffle_out) shuffle_out->reset();
      return gaussian_noise_view(image, config.noise_sigma, config.shuffle_seed);
    case NegativeView::kNone:
      if (shuffle_out) shuffle_out->reset();
      return image;
  }
  return image;
}

namespace {

LogitVector checked_logits(Backend& backend, const ViewHandle& view, std::span<const TokenId> prefix) {
  LogitVector logits = backend.next_token_logits(view, prefix);
  if (logits.size() != backend.descriptor().vocab_size) {
    throw Error(ErrorKind::kProtocolViolation, "backend returned " + std::to_string(logits.size()) +
                                                   " logits for a vocabulary of " +
                                                   std::to_string(backend.descriptor().vocab_size));
  }
  for (double& v : logits) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kProtocolViolation, "backend returned a non-finite logit");
    // Traces store float32; decoding from the same values keeps replay exact.
    v = static_cast<double>(static_cast<float>(v));
  }
  return logits;
}

GenerationResult run_generation(Backend& backend, const ImageGrid& image, const ImageGrid* negative,
                                const std::optional<ShuffleSpec>& shuffle, const TokenSequence& prompt,
                                const DecodingConfig& config) {
  config.validate();
  const auto& desc = backend.descriptor();
  GenerationTrace trace;
  trace.header = TraceHeader{negative != nullptr, config, shuffle, prompt, desc};

  const ViewHandle original = backend.encode_view(image, config.attention_boost, ViewLabel::kOriginal);
  std::optional<ViewHandle> disrupted;
  if (negative != nullptr) {
    const ViewLabel label = config.negative_view == NegativeView::kNoise ? ViewLabel::kNoise : ViewLabel::kShuffled;
    disrupted = backend.encode_view(*negative, config.boost_negative_view ? config.attention_boost : 0.0, label);
  }

  Rng rng(config.sampling_seed);
  TokenSequence prefix = prompt;
  trace.stop = StopReason::kMaxNewTokens;
  for (std::size_t t = 0; t < config.max_new_tokens; ++t) {
    TraceStep step;
    step.logits_original = checked_logits(backend, original, prefix);
    LogitVector calibrated;
    if (disrupted) {
      step.logits_negative = checked_logits(backend, *disrupted, prefix);
      calibrated = sdcd_calibrate(step.logits_original, step.logits_negative, config.alpha);
    } else {
      calibrated = step.logits_original;
    }
    step.mask = plausibility_mask(step.logits_original, config.beta);
    step.distribution = masked_distribution(calibrated, step.mask, config.temperature);
    step.token = sample_token(step.distribution, config.sampling, config.top_p, rng);
    const TokenId token = step.token;
    trace.steps.push_back(std::move(step));
    if (token == desc.eos_id) {
      trace.stop = StopReason::kEos;
      break;
    }
    prefix.push_back(token);
    trace.tokens.push_back(token);
  }
  return GenerationResult{trace.tokens, std::move(trace)};
}

}  // namespace

GenerationResult generate(Backend& backend, const ImageGrid& image, const TokenSequence& prompt,
                          const DecodingConfig& config) {
  config.validate();
  if (config.negative_view == NegativeView::kNone) {
    return run_generation(backend, image, nullptr, std::nullopt, prompt, config);
  }
  std::optional<ShuffleSpec> shuffle;
  const ImageGrid negative = build_negative_view(image, config, &shuffle);
  return run_generation(backend, image, &negative, shuffle, prompt, config);
}

GenerationResult generate_with_negative(Backend& backend, const ImageGrid& image, const ImageGrid& negative,
                                        const std::optional<ShuffleSpec>& shuffle, const TokenSequence& prompt,
                                        const DecodingConfig& config) {
  if (negative.height() != image.height() || negative.width() != image.width() ||
      negative.channels() != image.channels()) {
    throw Error(ErrorKind::kSpecMismatch, "negative view dimensions differ from the original image");
  }
  return run_generation(backend, image, &negative, shuffle, prompt, config);
}

GenerationResult regular_generate(Backend& backend, const ImageGrid& image, const TokenSequence& prompt,
                                  const DecodingConfig& config) {
  return run_generation(backend, image, nullptr, std::nullopt, prompt, config);
}

TokenSequence replay(const GenerationTrace& trace) {
  const auto& config = trace.header.config;
  Rng rng(config.sampling_seed);
  TokenSequence tokens;
  for (const auto& step : trace.steps) {
    const LogitVector calibrated = trace.header.contrastive
                                       ? sdcd_calibrate(step.logits_original, step.logits_negative, config.alpha)
                                       : step.logits_original;
    const auto mask = plausibility_mask(step.logits_original, config.beta);
    const auto dist = masked_distribution(calibrated, mask, config.temperature);
    const TokenId token = sample_token(dist, config.sampling, config.top_p, rng);
    if (token == trace.header.backend.eos_id) break;
    tokens.push_back(token);
  }
  return tokens;
}

}  // namespace sdcd
