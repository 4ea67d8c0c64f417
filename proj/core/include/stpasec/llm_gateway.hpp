#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "stpasec/document.hpp"
#include "stpasec/error.hpp"

namespace stpasec {

inline constexpr double kDefaultTemperature = 0.7;
inline constexpr double kJudgeTemperature = 0.0;

struct LlmRequest {
  std::string role_preamble;
  std::string prompt;
  double temperature = kDefaultTemperature;
  int max_output = 2048;
  std::string model_id;

  // Throws InvalidRequestError unless prompt is non-empty, temperature is in
  // [0, 2] and max_output is positive.
  void validate() const;
};

struct TokenCounts {
  long long input = 0;
  long long output = 0;
};

struct LlmResponse {
  std::string text;
  std::string model_id;
  std::chrono::milliseconds latency{0};
  TokenCounts tokens;
  // Transport attempt for complete(); index of the accepted ask for
  // complete_constrained().
  int attempt = 1;
};

class InvalidRequestError : public Error {
 public:
  using Error::Error;
};

// Non-retryable: bad or missing credentials.
class AuthError : public Error {
 public:
  using Error::Error;
};

// Retryable provider failure (network, 5xx, 429). After the retry cap the
// gateway rethrows it with the last diagnostics.
class TransientProviderError : public Error {
 public:
  using Error::Error;
};

class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

class FormatViolationError : public Error {
 public:
  FormatViolationError(std::string message, std::vector<std::string> rejected)
      : Error(std::move(message)), rejected_(std::move(rejected)) {}
  const std::vector<std::string>& rejected() const { return rejected_; }

 private:
  std::vector<std::string> rejected_;
};

struct ProviderReply {
  std::string text;
  TokenCounts tokens;
};

// One chat-completion backend. Implementations throw AuthError or
// TransientProviderError; any other exception is treated as transient.
class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual std::string name() const = 0;
  virtual ProviderReply send(const LlmRequest& request) = 0;
};

// Normalization applied before hashing prompts: CRLF to LF, trailing
// whitespace stripped from each line, outer blank space trimmed.
std::string normalize_prompt(std::string_view prompt);
std::string prompt_hash(std::string_view prompt);

// Scripted responses for offline runs. Lookup order: exact prompt-hash
// entries, then `contains` rules in file order, then the default response.
// Entries may be restricted to one model id.
class MockScript {
 public:
  struct HashEntry {
    std::string prompt_hash;
    std::optional<std::string> model;
    std::string response;
  };
  struct Rule {
    std::vector<std::string> contains;
    std::optional<std::string> model;
    std::string response;
  };

  MockScript() = default;

  void add(HashEntry entry) { hash_entries_.push_back(std::move(entry)); }
  void add(Rule rule) { rules_.push_back(std::move(rule)); }
  void set_default(std::string response) { default_response_ = std::move(response); }

  std::optional<std::string> lookup(std::string_view prompt, std::string_view model_id) const;

  static MockScript from_json(const json& doc);
  static MockScript load(const std::filesystem::path& path);
  // Hash entries for every successful exchange recorded in an audit log.
  static MockScript from_audit_log(const std::filesystem::path& path);
  json to_json() const;

 private:
  std::vector<HashEntry> hash_entries_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_response_;
};

class MockProvider : public LlmProvider {
 public:
  explicit MockProvider(MockScript script) : script_(std::move(script)) {}
  std::string name() const override { return "mock"; }
  // Throws TransientProviderError when the script has no answer.
  ProviderReply send(const LlmRequest& request) override;

 private:
  MockScript script_;
};

// Newline-delimited JSON log of every request/response pair.
class AuditLog {
 public:
  explicit AuditLog(const std::filesystem::path& path);
  void append(const json& record);

 private:
  std::mutex mu_;
  std::filesystem::path path_;
  long long seq_ = 0;
};

struct GatewayOptions {
  int retry_cap = 3;
  int reprompt_cap = 2;
  int max_in_flight = 4;
  std::chrono::milliseconds backoff_base{250};
  // Total output-token budget across all calls; nullopt means unlimited.
  std::optional<long long> output_token_budget;
};

// Returns nullopt when the text is acceptable, otherwise a short reason that
// is fed back to the model in the corrective re-ask.
using ResponseValidator = std::function<std::optional<std::string>(std::string_view)>;

// The only path from the pipeline to a language model. Providers are
// registered per model id and injected by the caller.
class LlmGateway {
 public:
  explicit LlmGateway(GatewayOptions options = {});
  ~LlmGateway();
  LlmGateway(const LlmGateway&) = delete;
  LlmGateway& operator=(const LlmGateway&) = delete;

  void register_provider(const std::string& model_id, std::shared_ptr<LlmProvider> provider);
  // Used for any model id without an explicit registration.
  void set_fallback_provider(std::shared_ptr<LlmProvider> provider);
  void set_audit_log(std::shared_ptr<AuditLog> log) { audit_ = std::move(log); }
  void set_sleep_function(std::function<void(std::chrono::milliseconds)> sleep);

  LlmResponse complete(const LlmRequest& request);
  LlmResponse complete_constrained(const LlmRequest& request, const ResponseValidator& validator,
                                   std::optional<int> max_reprompts = std::nullopt);

  const GatewayOptions& options() const { return options_; }
  long long output_tokens_used() const;
  long long calls_made() const;

 private:
  struct Slot;
  Slot& slot_for(const std::string& model_id);

  GatewayOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::shared_ptr<LlmProvider> fallback_;
  std::unique_ptr<Slot> fallback_slot_;
  std::shared_ptr<AuditLog> audit_;
  std::function<void(std::chrono::milliseconds)> sleep_;
  long long output_tokens_ = 0;
  long long calls_ = 0;
};

// Appended to the prompt on each re-ask after a format violation.
std::string corrective_instruction(std::string_view reason);

}  // namespace stpasec
