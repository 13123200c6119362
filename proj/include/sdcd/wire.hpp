#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdcd/backend.hpp"
#include "sdcd/error.hpp"

// Message shapes for the model bridge HTTP protocol (version 1):
//   GET  /descriptor -> descriptor fields
//   POST /encode     {image: base64 PNG, gamma, label} -> {view_id}
//   POST /step       {view_id, prefix: [ids]} -> {dtype: "float32", length, logits: base64 LE}
// Every message carries "protocol": 1. Failures come back as non-2xx with
// {"error": {"code": <ErrorKind name>, "message": ...}}.
namespace sdcd::wire {

inline constexpr int kProtocolVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string encode_float32_le(std::span<const float> values);
std::vector<float> decode_float32_le(std::string_view base64);

nlohmann::json descriptor_message(const BackendDescriptor& d);
BackendDescriptor parse_descriptor(const nlohmann::json& j);

nlohmann::json encode_request(const ImageGrid& image, double gamma, ViewLabel label);
nlohmann::json encode_response(const std::string& view_id);
nlohmann::json step_request(const std::string& view_id, std::span<const TokenId> prefix);
nlohmann::json step_response(std::span<const float> logits);
nlohmann::json error_message(ErrorKind kind, const std::string& message);

// Throws ProtocolViolation when the version field is missing or wrong.
void check_version(const nlohmann::json& j);

// Maps an error payload's code back to an ErrorKind (ModelError if unknown).
ErrorKind error_kind_from_code(std::string_view code);

}  // namespace sdcd::wire
