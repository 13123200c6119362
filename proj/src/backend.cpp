#include "sdcd/backend.hpp"

#include <atomic>

#include "sdcd/error.hpp"

namespace sdcd {

void BackendDescriptor::validate() const {
  auto in_vocab = [this](TokenId id) { return id >= 0 && static_cast<std::size_t>(id) < vocab_size; };
  if (!in_vocab(yes_id) || !in_vocab(no_id) || !in_vocab(eos_id)) {
    throw Error(ErrorKind::kProtocolViolation, "special token id outside the vocabulary");
  }
  if (yes_id == no_id || yes_id == eos_id || no_id == eos_id) {
    throw Error(ErrorKind::kProtocolViolation, "YES, NO and EOS token ids must be distinct");
  }
}

void to_json(nlohmann::json& j, const BackendDescriptor& d) {
  j = nlohmann::json{{"name", d.name},
                     {"vocab_size", d.vocab_size},
                     {"yes_id", d.yes_id},
                     {"no_id", d.no_id},
                     {"eos_id", d.eos_id},
                     {"context_limit", d.context_limit},
                     {"supports_attention_boost", d.supports_attention_boost}};
}

void from_json(const nlohmann::json& j, BackendDescriptor& d) {
  d.name = j.at("name").get<std::string>();
  d.vocab_size = j.at("vocab_size").get<std::size_t>();
  d.yes_id = j.at("yes_id").get<TokenId>();
  d.no_id = j.at("no_id").get<TokenId>();
  d.eos_id = j.at("eos_id").get<TokenId>();
  d.context_limit = j.at("context_limit").get<std::size_t>();
  d.supports_attention_boost = j.at("supports_attention_boost").get<bool>();
}

std::string_view to_string(ViewLabel label) {
  switch (label) {
    case ViewLabel::kOriginal: return "original";
    case ViewLabel::kShuffled: return "shuffled";
    case ViewLabel::kNoise: return "noise";
  }
  return "original";
}

ViewLabel view_label_from_string(std::string_view text) {
  if (text == "original") return ViewLabel::kOriginal;
  if (text == "shuffled") return ViewLabel::kShuffled;
  if (text == "noise") return ViewLabel::kNoise;
  throw Error(ErrorKind::kInvalidArgument, "unknown view label '" + std::string(text) + "'");
}

TokenSequence Backend::tokenize(std::string_view) const {
  throw Error(ErrorKind::kInvalidArgument,
              "backend '" + descriptor().name + "' does not tokenize; pass token ids");
}

std::string Backend::render(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (!out.empty()) out += ' ';
    out += std::to_string(t);
  }
  return out;
}

void Backend::check_handle(const ViewHandle& view) const {
  if (view.issuer != instance_id_) {
    throw Error(ErrorKind::kInvalidHandle, "view handle was issued by a different backend");
  }
}

std::uint64_t Backend::next_instance_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

std::string probe_prompt(std::string_view object) {
  std::string prompt(kProbePromptTemplate);
  const auto pos = prompt.find("<object>");
  prompt.replace(pos, 8, object);
  return prompt;
}

}  // namespace sdcd
