#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdcd/image.hpp"

namespace sdcd {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Vocabulary-indexed logits. Backends return float32-representable values.
using LogitVector = std::vector<double>;

struct BackendDescriptor {
  std::string name;
  std::size_t vocab_size = 0;
  TokenId yes_id = 0;
  TokenId no_id = 1;
  TokenId eos_id = 2;
  std::size_t context_limit = 0;
  bool supports_attention_boost = false;

  // YES, NO, EOS distinct and inside the vocabulary.
  void validate() const;
};

void to_json(nlohmann::json& j, const BackendDescriptor& d);
void from_json(const nlohmann::json& j, BackendDescriptor& d);

enum class ViewLabel { kOriginal, kShuffled, kNoise };

std::string_view to_string(ViewLabel label);
ViewLabel view_label_from_string(std::string_view text);

/**
 * An encoded view. Only the backend that issued it may consume it; the
 * payload is backend-private (features for the synthetic backend, nothing
 * for the remote one, which keys on view_id).
 */
struct ViewHandle {
  std::uint64_t issuer = 0;
  std::string view_id;
  ViewLabel label = ViewLabel::kOriginal;
  double attention_boost = 0.0;
  std::shared_ptr<const void> payload;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  virtual ViewHandle encode_view(const ImageGrid& image, double attention_boost, ViewLabel label) = 0;

  virtual LogitVector next_token_logits(const ViewHandle& view, std::span<const TokenId> prefix) = 0;

  // Word-level tokenizer; backends that tokenize elsewhere throw InvalidArgument.
  virtual TokenSequence tokenize(std::string_view text) const;
  virtual std::string render(std::span<const TokenId> tokens) const;

 protected:
  // Unique id stamped into every handle this backend issues.
  std::uint64_t instance_id() const { return instance_id_; }
  void check_handle(const ViewHandle& view) const;

 private:
  std::uint64_t instance_id_ = next_instance_id();
  static std::uint64_t next_instance_id();
};

inline constexpr std::string_view kProbePromptTemplate = "Is there a <object> in the image?";
inline constexpr std::string_view kCaptionPrompt = "Please help me describe the image in detail.";

std::string probe_prompt(std::string_view object);

}  // namespace sdcd
