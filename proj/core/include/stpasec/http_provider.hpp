#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stpasec/llm_gateway.hpp"

namespace stpasec {

struct ProviderConfig {
  std::string name;
  std::string model_id;
  std::string endpoint;  // base URL, e.g. https://api.openai.com/v1
  std::string credential_env;
};

std::vector<ProviderConfig> provider_configs_from_json(const json& doc);
std::vector<ProviderConfig> load_provider_configs(const std::filesystem::path& path);

// Splits "https://host:port/prefix" into its parts. Throws ConfigError.
struct Endpoint {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path_prefix;
};
Endpoint parse_endpoint(const std::string& url);

// Chat-completions client for OpenAI-compatible HTTP APIs
// (POST {endpoint}/chat/completions).
class OpenAiCompatibleProvider : public LlmProvider {
 public:
  OpenAiCompatibleProvider(ProviderConfig config, std::string api_key,
                           std::chrono::seconds timeout = std::chrono::seconds(120));
  std::string name() const override { return config_.name; }
  ProviderReply send(const LlmRequest& request) override;

 private:
  ProviderConfig config_;
  Endpoint endpoint_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

// Reads the credential from the environment; throws ConfigError naming the
// variable when it is unset or empty.
std::shared_ptr<LlmProvider> make_live_provider(const ProviderConfig& config);

}  // namespace stpasec
