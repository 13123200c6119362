#include "sdcd/remote_backend.hpp"

#include <httplib.h>

#include <cmath>

#include "sdcd/error.hpp"
#include "sdcd/wire.hpp"

namespace sdcd {

RemoteBackend::RemoteBackend(std::string endpoint, double timeout_seconds)
    : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {
  const auto scheme = endpoint_.find("://");
  if (scheme == std::string::npos || endpoint_.substr(0, scheme) != "http") {
    throw Error(ErrorKind::kInvalidArgument, "remote endpoint must be http://host:port[/prefix], got '" + endpoint_ + "'");
  }
  const auto path_start = endpoint_.find('/', scheme + 3);
  host_ = endpoint_.substr(0, path_start);
  if (path_start != std::string::npos) base_path_ = endpoint_.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  descriptor_ = wire::parse_descriptor(call("GET", "/descriptor", nullptr));
}

nlohmann::json RemoteBackend::call(const std::string& method, const std::string& path,
                                   const nlohmann::json* body) const {
  httplib::Client client(host_);
  const auto secs = static_cast<time_t>(timeout_seconds_);
  const auto usecs = static_cast<time_t>((timeout_seconds_ - std::floor(timeout_seconds_)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  const std::string url = base_path_ + path;
  httplib::Result res = method == "GET" ? client.Get(url)
                                        : client.Post(url, body->dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::kBackendUnavailable,
                endpoint_ + path + ": " + httplib::to_string(res.error()));
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::kProtocolViolation, endpoint_ + path + " returned a non-JSON body (HTTP " +
                                                   std::to_string(res->status) + ")");
  }
  if (res->status < 200 || res->status >= 300) {
    if (reply.contains("error")) {
      const auto& err = reply.at("error");
      throw Error(wire::error_kind_from_code(err.value("code", "")), err.value("message", "remote error"));
    }
    throw Error(ErrorKind::kModelError, endpoint_ + path + " failed with HTTP " + std::to_string(res->status));
  }
  wire::check_version(reply);
  return reply;
}

ViewHandle RemoteBackend::encode_view(const ImageGrid& image, double attention_boost, ViewLabel label) {
  if (!(attention_boost >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "attention boost must be >= 0");
  if (attention_boost > 0.0 && !descriptor_.supports_attention_boost) {
    throw Error(ErrorKind::kBoostUnsupported, "backend '" + descriptor_.name + "' cannot apply an attention boost");
  }
  const auto request = wire::encode_request(image, attention_boost, label);
  const auto reply = call("POST", "/encode", &request);
  if (!reply.contains("view_id") || !reply.at("view_id").is_string()) {
    throw Error(ErrorKind::kProtocolViolation, "encode reply lacks a view_id");
  }
  return ViewHandle{instance_id(), reply.at("view_id").get<std::string>(), label, attention_boost, nullptr};
}

LogitVector RemoteBackend::next_token_logits(const ViewHandle& view, std::span<const TokenId> prefix) {
  check_handle(view);
  if (descriptor_.context_limit > 0 && prefix.size() > descriptor_.context_limit) {
    throw Error(ErrorKind::kContextOverflow, "prefix exceeds the advertised context limit");
  }
  const auto request = wire::step_request(view.view_id, prefix);
  const auto reply = call("POST", "/step", &request);
  if (reply.value("dtype", "") != "float32" || !reply.contains("logits")) {
    throw Error(ErrorKind::kProtocolViolation, "step reply must carry float32 logits");
  }
  const auto values = wire::decode_float32_le(reply.at("logits").get<std::string>());
  if (values.size() != descriptor_.vocab_size || reply.value("length", std::size_t{0}) != values.size()) {
    throw Error(ErrorKind::kProtocolViolation,
                "step returned " + std::to_string(values.size()) + " logits, descriptor advertises " +
                    std::to_string(descriptor_.vocab_size));
  }
  LogitVector logits(values.begin(), values.end());
  for (double v : logits) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kProtocolViolation, "step returned a non-finite logit");
  }
  return logits;
}

}  // namespace sdcd
