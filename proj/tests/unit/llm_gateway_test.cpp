#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "stpasec/llm_gateway.hpp"
#include "test_support.hpp"

namespace stpasec {
namespace {

using namespace std::chrono_literals;

LlmRequest req(std::string prompt, std::string model = "gpt-4o") {
  LlmRequest r;
  r.prompt = std::move(prompt);
  r.model_id = std::move(model);
  return r;
}

// Fails `failures` times with the given exception type, then echoes.
template <class E>
class FlakyProvider : public LlmProvider {
 public:
  explicit FlakyProvider(int failures) : failures_(failures) {}
  std::string name() const override { return "flaky"; }
  ProviderReply send(const LlmRequest& r) override {
    ++calls;
    if (failures_-- > 0) throw E("boom");
    return {"echo:" + r.prompt, {1, 3}};
  }
  int calls = 0;

 private:
  int failures_;
};

class SequenceProvider : public LlmProvider {
 public:
  explicit SequenceProvider(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string name() const override { return "sequence"; }
  ProviderReply send(const LlmRequest& r) override {
    prompts.push_back(r.prompt);
    return {replies_.at(std::min(prompts.size() - 1, replies_.size() - 1)), {1, 1}};
  }
  std::vector<std::string> prompts;

 private:
  std::vector<std::string> replies_;
};

TEST(LlmRequest, Validation) {
  EXPECT_NO_THROW(req("x").validate());
  EXPECT_THROW(req("").validate(), InvalidRequestError);
  EXPECT_THROW(req("x", "").validate(), InvalidRequestError);
  auto r = req("x");
  r.temperature = 2.5;
  EXPECT_THROW(r.validate(), InvalidRequestError);
  r.temperature = 0.0;
  r.max_output = 0;
  EXPECT_THROW(r.validate(), InvalidRequestError);
}

TEST(Prompt, NormalizationAndHash) {
  EXPECT_EQ(normalize_prompt("\n a  \r\nb\t\n\n"), "a\nb");
  EXPECT_EQ(prompt_hash("a\r\nb  "), prompt_hash("a\nb"));
  EXPECT_NE(prompt_hash("a\nb"), prompt_hash("a b"));
  EXPECT_EQ(prompt_hash("x").size(), 64u);
}

TEST(MockScript, LookupOrder) {
  const auto script = MockScript::from_json(json::parse(R"({
    "default_response": "fallback",
    "entries": [{"prompt_hash": ")" + prompt_hash("exact prompt") + R"(", "response": "by-hash"}],
    "rules": [
      {"contains": ["alpha", "beta"], "model": "o3", "response": "both-o3"},
      {"contains": "alpha", "response": "alpha-any"}
    ]
  })"));
  EXPECT_EQ(script.lookup("exact prompt  ", "gpt-4o"), "by-hash");
  EXPECT_EQ(script.lookup("alpha and beta", "o3"), "both-o3");
  EXPECT_EQ(script.lookup("alpha and beta", "gpt-4o"), "alpha-any");
  EXPECT_EQ(script.lookup("nothing", "gpt-4o"), "fallback");
}

TEST(MockScript, FromAuditLogReplaysOkResponses) {
  const auto dir = testing::scratch_dir("audit");
  const auto path = dir / "a.ndjson";
  {
    LlmGateway gw(GatewayOptions{.retry_cap = 2});
    gw.set_sleep_function([](auto) {});
    gw.register_provider("m", std::make_shared<FlakyProvider<TransientProviderError>>(1));
    gw.set_audit_log(std::make_shared<AuditLog>(path));
    gw.complete(req("hello", "m"));
  }
  std::ifstream in(path);
  std::string line;
  std::vector<json> lines;
  while (std::getline(in, line)) lines.push_back(json::parse(line));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0]["outcome"], "transient_error");
  EXPECT_EQ(lines[1]["outcome"], "ok");
  EXPECT_EQ(lines[1]["attempt"], 2);
  EXPECT_EQ(lines[1]["seq"], 2);
  EXPECT_EQ(lines[1]["prompt_hash"], prompt_hash("hello"));

  const auto replay = MockScript::from_audit_log(path);
  EXPECT_EQ(replay.lookup("hello", "m"), "echo:hello");
  EXPECT_FALSE(replay.lookup("hello", "other"));
}

TEST(MockProvider, MissingScriptEntryIsTransient) {
  MockProvider p{MockScript{}};
  EXPECT_THROW(p.send(req("x")), TransientProviderError);
}

TEST(Gateway, RetriesWithExponentialBackoff) {
  LlmGateway gw(GatewayOptions{.retry_cap = 3, .backoff_base = 100ms});
  std::vector<std::chrono::milliseconds> sleeps;
  gw.set_sleep_function([&](auto d) { sleeps.push_back(d); });
  auto p = std::make_shared<FlakyProvider<TransientProviderError>>(2);
  gw.register_provider("gpt-4o", p);
  const auto r = gw.complete(req("x"));
  EXPECT_EQ(r.text, "echo:x");
  EXPECT_EQ(r.attempt, 3);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{100ms, 200ms}));
  EXPECT_EQ(gw.calls_made(), 1);
  EXPECT_EQ(gw.output_tokens_used(), 3);
}

TEST(Gateway, GivesUpAfterRetryCap) {
  LlmGateway gw(GatewayOptions{.retry_cap = 2});
  gw.set_sleep_function([](auto) {});
  auto p = std::make_shared<FlakyProvider<TransientProviderError>>(5);
  gw.register_provider("gpt-4o", p);
  EXPECT_THROW(gw.complete(req("x")), TransientProviderError);
  EXPECT_EQ(p->calls, 2);
}

TEST(Gateway, AuthErrorsAreNotRetried) {
  LlmGateway gw;
  gw.set_sleep_function([](auto) {});
  auto p = std::make_shared<FlakyProvider<AuthError>>(5);
  gw.register_provider("gpt-4o", p);
  EXPECT_THROW(gw.complete(req("x")), AuthError);
  EXPECT_EQ(p->calls, 1);
}

TEST(Gateway, UnknownModelWithoutFallbackIsConfigError) {
  LlmGateway gw;
  EXPECT_THROW(gw.complete(req("x", "nobody")), ConfigError);
}

TEST(Gateway, BudgetIsEnforced) {
  LlmGateway gw(GatewayOptions{.output_token_budget = 5});
  gw.register_provider("gpt-4o", std::make_shared<FlakyProvider<TransientProviderError>>(0));
  gw.complete(req("a"));
  gw.complete(req("b"));
  EXPECT_THROW(gw.complete(req("c")), BudgetExceededError);
}

TEST(Gateway, ConstrainedReasksWithCorrection) {
  LlmGateway gw;
  auto p = std::make_shared<SequenceProvider>(std::vector<std::string>{"maybe", "YES"});
  gw.register_provider("gpt-4o", p);
  auto validator = [](std::string_view t) -> std::optional<std::string> {
    if (t == "YES" || t == "NO") return std::nullopt;
    return "reply with YES or NO";
  };
  const auto r = gw.complete_constrained(req("question"), validator);
  EXPECT_EQ(r.text, "YES");
  EXPECT_EQ(r.attempt, 2);
  ASSERT_EQ(p->prompts.size(), 2u);
  EXPECT_EQ(p->prompts[1], "question" + corrective_instruction("reply with YES or NO"));
}

TEST(Gateway, ConstrainedFailureCarriesRejectedTexts) {
  LlmGateway gw(GatewayOptions{.reprompt_cap = 1});
  gw.register_provider("gpt-4o", std::make_shared<SequenceProvider>(std::vector<std::string>{"a", "b", "c"}));
  try {
    gw.complete_constrained(req("q"), [](std::string_view) { return std::optional<std::string>("no"); });
    FAIL();
  } catch (const FormatViolationError& e) {
    EXPECT_EQ(e.rejected(), (std::vector<std::string>{"a", "b"}));
  }
  EXPECT_THROW(gw.complete_constrained(req("q"), [](auto) { return std::nullopt; }, -1), InvalidRequestError);
}

class SlowProvider : public LlmProvider {
 public:
  std::string name() const override { return "slow"; }
  ProviderReply send(const LlmRequest&) override {
    const int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(10ms);
    --active;
    return {"ok", {1, 1}};
  }
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
};

TEST(Gateway, InFlightLimitPerModel) {
  LlmGateway gw(GatewayOptions{.max_in_flight = 2});
  auto p = std::make_shared<SlowProvider>();
  gw.register_provider("gpt-4o", p);
  std::vector<std::jthread> threads;
  for (int i = 0; i < 6; ++i) threads.emplace_back([&] { gw.complete(req("x")); });
  threads.clear();
  EXPECT_LE(p->peak.load(), 2);
  EXPECT_EQ(gw.calls_made(), 6);
}

}  // namespace
}  // namespace stpasec
