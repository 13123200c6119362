#include "sdcd/wire.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>

namespace sdcd::wire {

static_assert(std::endian::native == std::endian::little, "float32 wire encoding assumes a little-endian host");

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorKind::kProtocolViolation, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorKind::kProtocolViolation, "invalid base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

std::string encode_float32_le(std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(float));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return base64_encode(bytes);
}

std::vector<float> decode_float32_le(std::string_view base64) {
  const auto bytes = base64_decode(base64);
  if (bytes.size() % sizeof(float) != 0) throw Error(ErrorKind::kProtocolViolation, "logit payload is not float32-aligned");
  std::vector<float> values(bytes.size() / sizeof(float));
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

nlohmann::json descriptor_message(const BackendDescriptor& d) {
  nlohmann::json j = d;
  j["protocol"] = kProtocolVersion;
  return j;
}

BackendDescriptor parse_descriptor(const nlohmann::json& j) {
  check_version(j);
  try {
    auto d = j.get<BackendDescriptor>();
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kProtocolViolation, std::string("descriptor: ") + e.what());
  }
}

nlohmann::json encode_request(const ImageGrid& image, double gamma, ViewLabel label) {
  return {{"protocol", kProtocolVersion},
          {"image", base64_encode(encode_image(image, ImageFormat::kPng))},
          {"gamma", gamma},
          {"label", std::string(to_string(label))}};
}

nlohmann::json encode_response(const std::string& view_id) {
  return {{"protocol", kProtocolVersion}, {"view_id", view_id}};
}

nlohmann::json step_request(const std::string& view_id, std::span<const TokenId> prefix) {
  return {{"protocol", kProtocolVersion},
          {"view_id", view_id},
          {"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())}};
}

nlohmann::json step_response(std::span<const float> logits) {
  return {{"protocol", kProtocolVersion},
          {"dtype", "float32"},
          {"length", logits.size()},
          {"logits", encode_float32_le(logits)}};
}

nlohmann::json error_message(ErrorKind kind, const std::string& message) {
  return {{"protocol", kProtocolVersion},
          {"error", {{"code", std::string(to_string(kind))}, {"message", message}}}};
}

void check_version(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("protocol") || j.at("protocol") != kProtocolVersion) {
    throw Error(ErrorKind::kProtocolViolation, "message is not protocol version 1");
  }
}

ErrorKind error_kind_from_code(std::string_view code) {
  for (ErrorKind k : {ErrorKind::kInvalidHandle, ErrorKind::kContextOverflow, ErrorKind::kDecodeError,
                      ErrorKind::kModelError, ErrorKind::kBoostUnsupported, ErrorKind::kProtocolViolation,
                      ErrorKind::kInvalidArgument}) {
    if (to_string(k) == code) return k;
  }
  return ErrorKind::kModelError;
}

}  // namespace sdcd::wire
