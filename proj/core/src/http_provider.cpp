#include "stpasec/http_provider.hpp"

#include <httplib.h>

#include <cstdlib>
#include <regex>

#include "stpasec/util.hpp"

namespace stpasec {

std::vector<ProviderConfig> provider_configs_from_json(const json& doc) {
  const json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("providers") || doc.size() != 1) {
      throw ConfigError("provider config: expected a list or an object with only 'providers'");
    }
    list = &doc["providers"];
  }
  if (!list->is_array()) throw ConfigError("provider config: 'providers' must be a list");
  std::vector<ProviderConfig> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    FieldReader r((*list)[i], "provider config: providers[" + std::to_string(i) + "]");
    ProviderConfig c;
    c.name = r.required_string("name");
    c.model_id = r.required_string("model_id");
    c.endpoint = r.required_string("endpoint");
    c.credential_env = r.required_string("credential_env");
    r.finish();
    parse_endpoint(c.endpoint);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ProviderConfig> load_provider_configs(const std::filesystem::path& path) {
  try {
    return provider_configs_from_json(load_document(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex kUrl("^(https?)://([^/:]+)(?::([0-9]+))?(/.*)?$");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) throw ConfigError("invalid endpoint URL '" + url + "'");
  Endpoint ep;
  ep.scheme = m[1].str();
  ep.host = m[2].str();
  ep.port = m[3].matched ? std::stoi(m[3].str()) : (ep.scheme == "https" ? 443 : 80);
  ep.path_prefix = m[4].matched ? m[4].str() : "";
  while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  return ep;
}

OpenAiCompatibleProvider::OpenAiCompatibleProvider(ProviderConfig config, std::string api_key,
                                                   std::chrono::seconds timeout)
    : config_(std::move(config)), endpoint_(parse_endpoint(config_.endpoint)), api_key_(std::move(api_key)),
      timeout_(timeout) {}

ProviderReply OpenAiCompatibleProvider::send(const LlmRequest& request) {
  httplib::Client cli(endpoint_.scheme + "://" + endpoint_.host + ":" + std::to_string(endpoint_.port));
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_bearer_token_auth(api_key_);

  json messages = json::array();
  if (!request.role_preamble.empty()) messages.push_back({{"role", "system"}, {"content", request.role_preamble}});
  messages.push_back({{"role", "user"}, {"content", request.prompt}});
  const json body{{"model", config_.model_id},
                  {"messages", messages},
                  {"temperature", request.temperature},
                  {"max_tokens", request.max_output}};

  auto res = cli.Post(endpoint_.path_prefix + "/chat/completions", body.dump(), "application/json");
  if (!res) throw TransientProviderError(config_.name + ": request failed: " + httplib::to_string(res.error()));
  const std::string excerpt = res->body.substr(0, 240);
  if (res->status == 401 || res->status == 403) {
    throw AuthError(config_.name + ": authentication rejected (HTTP " + std::to_string(res->status) + "): " + excerpt);
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientProviderError(config_.name + ": HTTP " + std::to_string(res->status) + ": " + excerpt);
  }
  if (res->status != 200) {
    throw InvalidRequestError(config_.name + ": HTTP " + std::to_string(res->status) + ": " + excerpt);
  }
  try {
    const json doc = json::parse(res->body);
    ProviderReply reply;
    const json& content = doc.at("choices").at(0).at("message").at("content");
    reply.text = content.is_string() ? content.get<std::string>() : std::string{};
    if (doc.contains("usage")) {
      reply.tokens.input = doc["usage"].value("prompt_tokens", 0LL);
      reply.tokens.output = doc["usage"].value("completion_tokens", 0LL);
    }
    return reply;
  } catch (const json::exception& e) {
    throw TransientProviderError(config_.name + ": malformed completion body (" + e.what() + "): " + excerpt);
  }
}

std::shared_ptr<LlmProvider> make_live_provider(const ProviderConfig& config) {
  const char* key = std::getenv(config.credential_env.c_str());
  if (!key || !*key) {
    throw ConfigError("missing credential for provider '" + config.name + "': environment variable " +
                      config.credential_env + " is not set");
  }
  return std::make_shared<OpenAiCompatibleProvider>(config, key);
}

}  // namespace stpasec
