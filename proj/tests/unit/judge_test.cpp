#include <gtest/gtest.h>

#include "stpasec/judge.hpp"
#include "test_support.hpp"

namespace stpasec {
namespace {

std::array<bool, 5> bits(unsigned v) {
  std::array<bool, 5> out{};
  for (int i = 0; i < 5; ++i) out[i] = (v >> i) & 1u;
  return out;
}

TEST(Combine, ExhaustiveTruthTable) {
  for (unsigned mask = 0; mask < 1024; ++mask) {
    const auto a = make_verdict("s", "o3", bits(mask & 31u));
    const auto b = make_verdict("s", "gemini-2.5-pro", bits(mask >> 5));
    // Oracle: every one of the ten step flags is true.
    const bool expected = mask == 1023;
    const auto ab = combine(a, b);
    EXPECT_EQ(ab.accepted, expected) << mask;
    EXPECT_EQ(combine(b, a).accepted, ab.accepted) << mask;
    for (int bit = 0; bit < 10; ++bit) {
      const unsigned raised = mask | (1u << bit);
      const auto ra = make_verdict("s", "o3", bits(raised & 31u));
      const auto rb = make_verdict("s", "gemini-2.5-pro", bits(raised >> 5));
      EXPECT_GE(combine(ra, rb).accepted, ab.accepted) << mask << " bit " << bit;
    }
  }
}

TEST(Combine, RejectsMismatchedAndDuplicate) {
  const auto a = make_verdict("s1", "o3", bits(31));
  EXPECT_THROW(combine(a, make_verdict("s2", "gemini", bits(31))), MismatchedScenarioError);
  EXPECT_THROW(combine(a, make_verdict("s1", "o3", bits(31))), DuplicateJudgeError);
}

TEST(Verdict, OverallIsConjunction) {
  EXPECT_TRUE(make_verdict("s", "m", bits(31)).overall);
  EXPECT_FALSE(make_verdict("s", "m", bits(15)).overall);
}

std::string reply(std::array<bool, 5> steps, bool overall) {
  const char* names[] = {"Reconnaissance", "Gaining access", "Privilege escalation", "Attack execution", "Impact"};
  json per = json::array();
  for (int i = 0; i < 5; ++i) per.push_back({{"name", names[i]}, {"correct", steps[i]}});
  return json{{"per_step", per}, {"overall_correct", overall}}.dump();
}

TEST(JudgeReply, StrictParsing) {
  EXPECT_FALSE(judge_reply_error(reply(bits(31), true)));
  EXPECT_FALSE(judge_reply_error("```json\n" + reply(bits(3), false) + "\n```"));
  EXPECT_EQ(parse_judge_reply(reply(bits(3), true)).per_step, bits(3));

  auto extra = json::parse(reply(bits(31), true));
  extra["reasons"] = "fine";
  EXPECT_TRUE(judge_reply_error(extra.dump()));

  auto reordered = json::parse(reply(bits(31), true));
  std::swap(reordered["per_step"][0], reordered["per_step"][1]);
  EXPECT_TRUE(judge_reply_error(reordered.dump()));

  auto short_list = json::parse(reply(bits(31), true));
  short_list["per_step"].erase(4);
  EXPECT_TRUE(judge_reply_error(short_list.dump()));

  auto stringly = json::parse(reply(bits(31), true));
  stringly["per_step"][2]["correct"] = "true";
  EXPECT_TRUE(judge_reply_error(stringly.dump()));

  EXPECT_TRUE(judge_reply_error("All steps look correct."));
  EXPECT_THROW(parse_judge_reply("[]"), FormatViolationError);
}

AttackScenario scenario() {
  AttackScenario s;
  s.device_name = "Dev";
  s.factor = TechnologyFactor::OperatingSystem;
  s.keyword = "Linux";
  s.cve_id = "CVE-2025-1234";
  s.ml_attack_name = "evasion";
  for (auto st : kStageOrder) s.stages.push_back({st, "step text"});
  return s;
}

JudgeContext context() {
  return {"A device.", "a → b (x)", {"CVE-2025-1234", "mitre", "desc", "2025-01-01", std::nullopt, std::nullopt, ""}};
}

TEST(JudgePrompt, ContainsContextAndScenario) {
  const auto p = render_judge_prompt(scenario(), context());
  EXPECT_NE(p.find("\nCVE: CVE-2025-1234\n"), std::string::npos);
  EXPECT_NE(p.find("Targeted technology: Linux (Operating System)"), std::string::npos);
  EXPECT_NE(p.find(serialize_stages(scenario())), std::string::npos);
}

TEST(JudgeScenario, AcceptRejectAndUnjudgeable) {
  MockScript script;
  script.add(MockScript::Rule{{"reviewing"}, std::string("o3"), reply(bits(31), true)});
  script.add(MockScript::Rule{{"reviewing"}, std::string("gemini-2.5-pro"), reply(bits(0b10111), true)});
  LlmGateway gw(GatewayOptions{.retry_cap = 1, .reprompt_cap = 0});
  gw.set_fallback_provider(std::make_shared<MockProvider>(script));

  auto j = judge_scenario(scenario(), context(), {"o3", "gemini-2.5-pro"}, gw);
  EXPECT_EQ(j.status, JudgementStatus::Rejected);
  ASSERT_TRUE(j.outcomes[1].verdict);
  EXPECT_TRUE(j.outcomes[1].verdict->self_inconsistent);
  EXPECT_FALSE(j.outcomes[0].verdict->self_inconsistent);
  EXPECT_EQ(judgement_from_json(to_json(j)).status, j.status);

  j = judge_scenario(scenario(), context(), {"o3", "gpt-4o"}, gw);
  EXPECT_EQ(j.status, JudgementStatus::Unjudgeable);
  EXPECT_FALSE(j.combined);
  EXPECT_FALSE(j.outcomes[1].error.empty());

  EXPECT_THROW(judge_scenario(scenario(), context(), {"o3", "o3"}, gw), DuplicateJudgeError);
}

TEST(JudgeScenario, JudgesRunAtTemperatureZero) {
  class Capture : public LlmProvider {
   public:
    std::string name() const override { return "capture"; }
    ProviderReply send(const LlmRequest& r) override {
      std::lock_guard lock(mu);
      temps.push_back(r.temperature);
      return {reply(bits(31), true), {}};
    }
    std::mutex mu;
    std::vector<double> temps;
  };
  auto cap = std::make_shared<Capture>();
  LlmGateway gw;
  gw.set_fallback_provider(cap);
  const auto j = judge_scenario(scenario(), context(), {"o3", "gemini-2.5-pro"}, gw);
  EXPECT_EQ(j.status, JudgementStatus::Accepted);
  EXPECT_EQ(cap->temps, (std::vector<double>{0.0, 0.0}));
}

}  // namespace
}  // namespace stpasec
