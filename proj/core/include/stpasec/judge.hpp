#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stpasec/cve_client.hpp"
#include "stpasec/llm_gateway.hpp"
#include "stpasec/scenario.hpp"

namespace stpasec {

inline constexpr std::string_view kJudgeTemplateVersion = "judge-v1";

struct JudgeContext {
  std::string system_description;
  std::string data_flow;
  CveRecord cve;
};

struct JudgeVerdict {
  std::string scenario_id;
  std::string judge_model_id;
  std::array<bool, 5> per_step{};
  bool overall = false;           // always the conjunction of per_step
  bool self_inconsistent = false;  // judge's own overall flag disagreed

  bool operator==(const JudgeVerdict&) const = default;
};

// Builds a verdict whose overall is the conjunction of per_step.
JudgeVerdict make_verdict(std::string scenario_id, std::string judge_model_id, std::array<bool, 5> per_step);

struct CombinedVerdict {
  std::string scenario_id;
  std::array<JudgeVerdict, 2> verdicts;
  bool accepted = false;
};

class MismatchedScenarioError : public Error {
 public:
  using Error::Error;
};

// Same judge model on both sides.
class DuplicateJudgeError : public Error {
 public:
  using Error::Error;
};

std::string render_judge_prompt(const AttackScenario& scenario, const JudgeContext& context);

struct ParsedJudgeReply {
  std::array<bool, 5> per_step{};
  bool overall_claimed = false;
};

// Strict parse of the judge's object: {"per_step": [five {"name","correct"}
// entries in canonical order], "overall_correct": bool} and nothing else.
// Returns the reason on failure.
std::optional<std::string> judge_reply_error(std::string_view text);
ParsedJudgeReply parse_judge_reply(std::string_view text);

// Outcome of one judge. A missing verdict means the judge never produced a
// well-formed object; such scenarios are "unjudgeable".
struct JudgeOutcome {
  std::optional<JudgeVerdict> verdict;
  std::string judge_model_id;
  std::string error;
};

JudgeVerdict judge_once(const AttackScenario& scenario, const JudgeContext& context,
                        const std::string& judge_model, LlmGateway& gateway);

CombinedVerdict combine(const JudgeVerdict& a, const JudgeVerdict& b);

enum class JudgementStatus { Accepted, Rejected, Unjudgeable };
std::string_view to_string(JudgementStatus s);
std::optional<JudgementStatus> parse_judgement_status(std::string_view s);

struct Judgement {
  std::string scenario_id;
  std::vector<JudgeOutcome> outcomes;  // one per judge, in configured order
  std::optional<CombinedVerdict> combined;
  JudgementStatus status = JudgementStatus::Unjudgeable;
};

// Runs both judges concurrently and combines them. Throws DuplicateJudgeError
// if the two model ids are equal.
Judgement judge_scenario(const AttackScenario& scenario, const JudgeContext& context,
                         const std::array<std::string, 2>& judge_models, LlmGateway& gateway);

json to_json(const JudgeVerdict& v);
JudgeVerdict judge_verdict_from_json(const json& j);
json to_json(const Judgement& j);
Judgement judgement_from_json(const json& j);

}  // namespace stpasec
