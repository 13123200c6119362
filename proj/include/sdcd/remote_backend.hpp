#pragma once

#include <string>

#include "sdcd/backend.hpp"

namespace sdcd {

/// Client for a model bridge speaking the protocol in sdcd/wire.hpp.
class RemoteBackend final : public Backend {
 public:
  // endpoint: "http://host:port" with an optional path prefix. Fetches the
  // descriptor immediately; throws BackendUnavailable if unreachable.
  explicit RemoteBackend(std::string endpoint, double timeout_seconds = 30.0);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  ViewHandle encode_view(const ImageGrid& image, double attention_boost, ViewLabel label) override;
  LogitVector next_token_logits(const ViewHandle& view, std::span<const TokenId> prefix) override;

  const std::string& endpoint() const { return endpoint_; }

 private:
  nlohmann::json call(const std::string& method, const std::string& path, const nlohmann::json* body) const;

  std::string endpoint_;
  std::string host_;
  std::string base_path_;
  double timeout_seconds_;
  BackendDescriptor descriptor_;
};

}  // namespace sdcd
