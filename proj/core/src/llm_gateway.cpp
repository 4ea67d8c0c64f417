#include "stpasec/llm_gateway.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "stpasec/util.hpp"

namespace stpasec {

void LlmRequest::validate() const {
  if (util::trim(prompt).empty()) throw InvalidRequestError("LLM request prompt must not be empty");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw InvalidRequestError("LLM request temperature " + std::to_string(temperature) + " is outside [0, 2]");
  }
  if (max_output <= 0) throw InvalidRequestError("LLM request max_output must be positive");
  if (model_id.empty()) throw InvalidRequestError("LLM request model_id must not be empty");
}

std::string normalize_prompt(std::string_view prompt) {
  std::string out;
  for (const auto& line : util::split_lines(prompt)) {
    std::string_view l = line;
    while (!l.empty() && std::isspace(static_cast<unsigned char>(l.back()))) l.remove_suffix(1);
    out.append(l);
    out.push_back('\n');
  }
  return util::trim(out);
}

std::string prompt_hash(std::string_view prompt) { return util::sha256_hex(normalize_prompt(prompt)); }

std::string corrective_instruction(std::string_view reason) {
  return "\n\nYour previous answer was rejected: " + std::string(reason) +
         ". Answer again and follow the required output format exactly.";
}

// --- MockScript -----------------------------------------------------------

std::optional<std::string> MockScript::lookup(std::string_view prompt, std::string_view model_id) const {
  const auto normalized = normalize_prompt(prompt);
  const auto hash = util::sha256_hex(normalized);
  auto model_ok = [&](const std::optional<std::string>& m) { return !m || *m == model_id; };
  for (const auto& e : hash_entries_) {
    if (e.prompt_hash == hash && model_ok(e.model)) return e.response;
  }
  for (const auto& r : rules_) {
    if (!model_ok(r.model)) continue;
    bool all = true;
    for (const auto& needle : r.contains) {
      if (normalized.find(needle) == std::string::npos) {
        all = false;
        break;
      }
    }
    if (all) return r.response;
  }
  return default_response_;
}

MockScript MockScript::from_json(const json& doc) {
  FieldReader top(doc, "mock script");
  MockScript script;
  if (auto d = top.optional_string("default_response")) script.set_default(*d);
  if (const json* entries = top.optional("entries")) {
    for (std::size_t i = 0; i < entries->size(); ++i) {
      FieldReader r((*entries)[i], "mock script: entries[" + std::to_string(i) + "]");
      HashEntry e;
      e.prompt_hash = r.required_string("prompt_hash");
      e.model = r.optional_string("model");
      e.response = r.required_string("response");
      r.finish();
      script.add(std::move(e));
    }
  }
  if (const json* rules = top.optional("rules")) {
    for (std::size_t i = 0; i < rules->size(); ++i) {
      FieldReader r((*rules)[i], "mock script: rules[" + std::to_string(i) + "]");
      Rule rule;
      const json& contains = r.required("contains");
      if (contains.is_string()) {
        rule.contains.push_back(contains.get<std::string>());
      } else {
        for (const auto& c : contains) rule.contains.push_back(c.get<std::string>());
      }
      rule.model = r.optional_string("model");
      rule.response = r.required_string("response");
      r.finish();
      script.add(std::move(rule));
    }
  }
  top.finish();
  return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  try {
    return from_json(load_document(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

MockScript MockScript::from_audit_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read audit log: " + path.string());
  MockScript script;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    const json rec = json::parse(line);
    if (rec.value("outcome", "") != "ok") continue;
    const auto hash = rec.at("prompt_hash").get<std::string>();
    const auto model = rec.at("model_id").get<std::string>();
    if (!seen.emplace(hash, model).second) continue;
    script.add(HashEntry{hash, model, rec.at("response").get<std::string>()});
  }
  return script;
}

json MockScript::to_json() const {
  json entries = json::array();
  for (const auto& e : hash_entries_) {
    json j{{"prompt_hash", e.prompt_hash}, {"response", e.response}};
    if (e.model) j["model"] = *e.model;
    entries.push_back(j);
  }
  json rules = json::array();
  for (const auto& r : rules_) {
    json j{{"contains", r.contains}, {"response", r.response}};
    if (r.model) j["model"] = *r.model;
    rules.push_back(j);
  }
  json doc{{"entries", entries}, {"rules", rules}};
  if (default_response_) doc["default_response"] = *default_response_;
  return doc;
}

namespace {
long long count_words(std::string_view s) {
  long long n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}
}  // namespace

ProviderReply MockProvider::send(const LlmRequest& request) {
  auto text = script_.lookup(request.prompt, request.model_id);
  if (!text) {
    throw TransientProviderError("mock script has no response for prompt " + prompt_hash(request.prompt).substr(0, 12) +
                                 " (model '" + request.model_id + "')");
  }
  return {*text, {count_words(request.role_preamble) + count_words(request.prompt), count_words(*text)}};
}

// --- AuditLog -------------------------------------------------------------

AuditLog::AuditLog(const std::filesystem::path& path) : path_(path) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream truncate(path_, std::ios::trunc);
  if (!truncate) throw ConfigError("cannot open audit log: " + path_.string());
}

void AuditLog::append(const json& record) {
  std::lock_guard lock(mu_);
  json r = record;
  r["seq"] = ++seq_;
  std::ofstream out(path_, std::ios::app);
  out << r.dump() << '\n';
}

// --- LlmGateway -----------------------------------------------------------

struct LlmGateway::Slot {
  Slot(std::shared_ptr<LlmProvider> p, int limit) : provider(std::move(p)), in_flight(std::max(limit, 1)) {}
  std::shared_ptr<LlmProvider> provider;
  std::counting_semaphore<1024> in_flight;
};

LlmGateway::LlmGateway(GatewayOptions options)
    : options_(options), sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (options_.retry_cap < 1) throw ConfigError("gateway retry cap must be at least 1");
  if (options_.reprompt_cap < 0) throw ConfigError("gateway re-prompt cap must not be negative");
}

LlmGateway::~LlmGateway() = default;

void LlmGateway::register_provider(const std::string& model_id, std::shared_ptr<LlmProvider> provider) {
  std::lock_guard lock(mu_);
  slots_[model_id] = std::make_unique<Slot>(std::move(provider), options_.max_in_flight);
}

void LlmGateway::set_fallback_provider(std::shared_ptr<LlmProvider> provider) {
  std::lock_guard lock(mu_);
  fallback_ = provider;
  fallback_slot_ = std::make_unique<Slot>(std::move(provider), options_.max_in_flight);
}

void LlmGateway::set_sleep_function(std::function<void(std::chrono::milliseconds)> sleep) { sleep_ = std::move(sleep); }

LlmGateway::Slot& LlmGateway::slot_for(const std::string& model_id) {
  std::lock_guard lock(mu_);
  auto it = slots_.find(model_id);
  if (it != slots_.end()) return *it->second;
  if (fallback_slot_) return *fallback_slot_;
  throw ConfigError("no LLM provider registered for model '" + model_id + "'");
}

long long LlmGateway::output_tokens_used() const {
  std::lock_guard lock(mu_);
  return output_tokens_;
}

long long LlmGateway::calls_made() const {
  std::lock_guard lock(mu_);
  return calls_;
}

LlmResponse LlmGateway::complete(const LlmRequest& request) {
  request.validate();
  {
    std::lock_guard lock(mu_);
    if (options_.output_token_budget && output_tokens_ >= *options_.output_token_budget) {
      throw BudgetExceededError("output token budget of " + std::to_string(*options_.output_token_budget) +
                                " exhausted");
    }
  }
  Slot& slot = slot_for(request.model_id);
  const auto hash = prompt_hash(request.prompt);

  auto audit = [&](const std::string& outcome, int attempt, const std::string& text, const std::string& error,
                   std::chrono::milliseconds latency, TokenCounts tokens) {
    if (!audit_) return;
    audit_->append({{"model_id", request.model_id},
                    {"provider", slot.provider->name()},
                    {"temperature", request.temperature},
                    {"prompt_hash", hash},
                    {"role_preamble", request.role_preamble},
                    {"prompt", request.prompt},
                    {"response", text},
                    {"outcome", outcome},
                    {"error", error},
                    {"attempt", attempt},
                    {"latency_ms", latency.count()},
                    {"input_tokens", tokens.input},
                    {"output_tokens", tokens.output}});
  };

  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry_cap; ++attempt) {
    slot.in_flight.acquire();
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
    };
    try {
      ProviderReply reply = slot.provider->send(request);
      const auto latency = elapsed();
      slot.in_flight.release();
      {
        std::lock_guard lock(mu_);
        output_tokens_ += reply.tokens.output;
        ++calls_;
      }
      audit("ok", attempt, reply.text, "", latency, reply.tokens);
      return {std::move(reply.text), request.model_id, latency, reply.tokens, attempt};
    } catch (const AuthError& e) {
      slot.in_flight.release();
      audit("auth_error", attempt, "", e.what(), elapsed(), {});
      throw;
    } catch (const InvalidRequestError& e) {
      slot.in_flight.release();
      audit("invalid_request", attempt, "", e.what(), elapsed(), {});
      throw;
    } catch (const std::exception& e) {
      slot.in_flight.release();
      last_error = e.what();
      audit("transient_error", attempt, "", last_error, elapsed(), {});
    }
    if (attempt < options_.retry_cap) sleep_(options_.backoff_base * (1LL << (attempt - 1)));
  }
  throw TransientProviderError("provider '" + slot.provider->name() + "' failed after " +
                               std::to_string(options_.retry_cap) + " attempts: " + last_error);
}

LlmResponse LlmGateway::complete_constrained(const LlmRequest& request, const ResponseValidator& validator,
                                             std::optional<int> max_reprompts) {
  const int reprompts = max_reprompts.value_or(options_.reprompt_cap);
  if (reprompts < 0) throw InvalidRequestError("max_reprompts must not be negative");
  LlmRequest current = request;
  std::vector<std::string> rejected;
  std::string last_reason;
  for (int ask = 1; ask <= reprompts + 1; ++ask) {
    LlmResponse resp = complete(current);
    const auto reason = validator(resp.text);
    if (!reason) {
      resp.attempt = ask;
      return resp;
    }
    rejected.push_back(resp.text);
    last_reason = *reason;
    current.prompt = request.prompt + corrective_instruction(*reason);
  }
  throw FormatViolationError("model '" + request.model_id + "' gave no valid response in " +
                                 std::to_string(reprompts + 1) + " asks: " + last_reason,
                             std::move(rejected));
}

}  // namespace stpasec
