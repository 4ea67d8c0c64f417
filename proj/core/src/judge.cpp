#include "stpasec/judge.hpp"

#include <algorithm>
#include <future>
#include <variant>

#include "stpasec/util.hpp"

namespace stpasec {

JudgeVerdict make_verdict(std::string scenario_id, std::string judge_model_id, std::array<bool, 5> per_step) {
  JudgeVerdict v;
  v.scenario_id = std::move(scenario_id);
  v.judge_model_id = std::move(judge_model_id);
  v.per_step = per_step;
  v.overall = std::all_of(per_step.begin(), per_step.end(), [](bool b) { return b; });
  return v;
}

std::string render_judge_prompt(const AttackScenario& scenario, const JudgeContext& context) {
  std::string p;
  p += "You are reviewing an attack scenario written for a security analysis of an ML-enabled medical device. "
       "The scenario describes how an adversary could exploit a known vulnerability to inject, modify, or spoof "
       "data consumed by the ML component.\n\n";
  p += "Judge each of the five steps independently. A step is correct only if all of the following hold:\n";
  p += "- It is consistent with the system description, the data flow, and the referenced CVE.\n";
  p += "- It is a plausible part of a data tampering, injection, or spoofing attack on the ML component.\n";
  p += "- It does not invent system components that are absent from the description and data flow.\n";
  p += "- Its content belongs to the phase it is listed under.\n\n";
  p += "Do not give reasons. Do not add exploit details. Reply with a single JSON object and nothing else, "
       "using exactly this shape and step order:\n";
  p += "{\"per_step\": [";
  for (std::size_t i = 0; i < kStageOrder.size(); ++i) {
    if (i) p += ", ";
    p += "{\"name\": \"";
    p += display_name(kStageOrder[i]);
    p += "\", \"correct\": true|false}";
  }
  p += "], \"overall_correct\": true|false}\n";
  p += "overall_correct must be true only if every step is correct.\n\n";
  p += "System description: " + context.system_description + "\n";
  p += "Data flow: " + context.data_flow + "\n";
  p += "Targeted technology: " + scenario.keyword + " (" + std::string(display_name(scenario.factor)) + ")\n";
  p += "ML attack: " + scenario.ml_attack_name + "\n";
  p += "CVE: " + context.cve.cve_id + "\n";
  p += "CNA: " + (context.cve.cna.empty() ? std::string("unknown") : context.cve.cna) + "\n";
  p += "CVE description: " + context.cve.description + "\n\n";
  p += "Attack scenario:\n";
  p += serialize_stages(scenario);
  return p;
}

namespace {

// Accepts the bare object or the object wrapped in one fenced block.
std::string unwrap_fence(std::string_view text) {
  std::string t = util::trim(text);
  if (t.rfind("```", 0) == 0) {
    const auto first_nl = t.find('\n');
    const auto last = t.rfind("```");
    if (first_nl != std::string::npos && last != std::string::npos && last > first_nl) {
      t = util::trim(std::string_view(t).substr(first_nl + 1, last - first_nl - 1));
    }
  }
  return t;
}

std::variant<ParsedJudgeReply, std::string> parse_reply(std::string_view text) {
  json doc;
  try {
    doc = json::parse(unwrap_fence(text));
  } catch (const json::exception&) {
    return std::string("reply is not a JSON object");
  }
  if (!doc.is_object()) return std::string("reply is not a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "per_step" && key != "overall_correct") return "unexpected key '" + key + "'";
  }
  if (!doc.contains("per_step") || !doc["per_step"].is_array()) return std::string("missing per_step list");
  if (!doc.contains("overall_correct") || !doc["overall_correct"].is_boolean()) {
    return std::string("missing boolean overall_correct");
  }
  const json& steps = doc["per_step"];
  ParsedJudgeReply reply;
  for (std::size_t i = 0; i < kStageOrder.size(); ++i) {
    const std::string expected(display_name(kStageOrder[i]));
    if (i >= steps.size()) return "per_step is missing an entry for '" + expected + "'";
    const json& e = steps[i];
    if (!e.is_object() || e.size() != 2 || !e.contains("name") || !e.contains("correct") ||
        !e["name"].is_string() || !e["correct"].is_boolean()) {
      return "per_step entry " + std::to_string(i + 1) + " must be {\"name\": string, \"correct\": boolean}";
    }
    if (!util::iequals(util::trim(e["name"].get<std::string>()), expected)) {
      return "per_step entry " + std::to_string(i + 1) + " must be '" + expected + "'";
    }
    reply.per_step[i] = e["correct"].get<bool>();
  }
  if (steps.size() != kStageOrder.size()) return std::string("per_step must have exactly five entries");
  reply.overall_claimed = doc["overall_correct"].get<bool>();
  return reply;
}

}  // namespace

std::optional<std::string> judge_reply_error(std::string_view text) {
  auto r = parse_reply(text);
  if (auto* err = std::get_if<std::string>(&r)) return *err;
  return std::nullopt;
}

ParsedJudgeReply parse_judge_reply(std::string_view text) {
  auto r = parse_reply(text);
  if (auto* err = std::get_if<std::string>(&r)) throw FormatViolationError(*err, {std::string(text)});
  return std::get<ParsedJudgeReply>(r);
}

JudgeVerdict judge_once(const AttackScenario& scenario, const JudgeContext& context, const std::string& judge_model,
                        LlmGateway& gateway) {
  LlmRequest req;
  req.prompt = render_judge_prompt(scenario, context);
  req.temperature = kJudgeTemperature;
  req.model_id = judge_model;
  req.max_output = 512;
  const auto resp = gateway.complete_constrained(req, judge_reply_error);
  const auto parsed = parse_judge_reply(resp.text);
  JudgeVerdict v = make_verdict(scenario.id(), resp.model_id, parsed.per_step);
  v.self_inconsistent = parsed.overall_claimed != v.overall;
  return v;
}

CombinedVerdict combine(const JudgeVerdict& a, const JudgeVerdict& b) {
  if (a.scenario_id != b.scenario_id) {
    throw MismatchedScenarioError("cannot combine verdicts for different scenarios: '" + a.scenario_id + "' and '" +
                                  b.scenario_id + "'");
  }
  if (a.judge_model_id == b.judge_model_id) {
    throw DuplicateJudgeError("both verdicts come from judge '" + a.judge_model_id + "'");
  }
  return {a.scenario_id, {a, b}, a.overall && b.overall};
}

std::string_view to_string(JudgementStatus s) {
  switch (s) {
    case JudgementStatus::Accepted: return "accepted";
    case JudgementStatus::Rejected: return "rejected";
    case JudgementStatus::Unjudgeable: return "unjudgeable";
  }
  return "?";
}

std::optional<JudgementStatus> parse_judgement_status(std::string_view s) {
  for (auto st : {JudgementStatus::Accepted, JudgementStatus::Rejected, JudgementStatus::Unjudgeable}) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

Judgement judge_scenario(const AttackScenario& scenario, const JudgeContext& context,
                         const std::array<std::string, 2>& judge_models, LlmGateway& gateway) {
  if (judge_models[0] == judge_models[1]) {
    throw DuplicateJudgeError("the two judges must be distinct models, got '" + judge_models[0] + "' twice");
  }
  auto run = [&](const std::string& model) {
    JudgeOutcome out;
    out.judge_model_id = model;
    try {
      out.verdict = judge_once(scenario, context, model, gateway);
    } catch (const BudgetExceededError&) {
      throw;
    } catch (const AuthError&) {
      throw;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    return out;
  };
  auto second = std::async(std::launch::async, run, judge_models[1]);
  JudgeOutcome first;
  try {
    first = run(judge_models[0]);
  } catch (...) {
    second.wait();
    throw;
  }

  Judgement j;
  j.scenario_id = scenario.id();
  j.outcomes.push_back(std::move(first));
  j.outcomes.push_back(second.get());
  if (j.outcomes[0].verdict && j.outcomes[1].verdict) {
    j.combined = combine(*j.outcomes[0].verdict, *j.outcomes[1].verdict);
    j.status = j.combined->accepted ? JudgementStatus::Accepted : JudgementStatus::Rejected;
  } else {
    j.status = JudgementStatus::Unjudgeable;
  }
  return j;
}

json to_json(const JudgeVerdict& v) {
  json steps = json::array();
  for (std::size_t i = 0; i < kStageOrder.size(); ++i) {
    steps.push_back({{"name", display_name(kStageOrder[i])}, {"correct", v.per_step[i]}});
  }
  return {{"scenario_id", v.scenario_id},
          {"judge_model_id", v.judge_model_id},
          {"per_step", steps},
          {"overall", v.overall},
          {"self_inconsistent", v.self_inconsistent}};
}

JudgeVerdict judge_verdict_from_json(const json& j) {
  FieldReader r(j, "judge verdict");
  const auto scenario_id = r.required_string("scenario_id");
  const auto model = r.required_string("judge_model_id");
  const json& steps = r.required("per_step");
  const bool overall = r.boolean_or("overall", false);
  const bool inconsistent = r.boolean_or("self_inconsistent", false);
  r.finish();
  if (!steps.is_array() || steps.size() != kStageOrder.size()) {
    throw ConfigError("judge verdict: per_step must have five entries");
  }
  std::array<bool, 5> per_step{};
  for (std::size_t i = 0; i < kStageOrder.size(); ++i) per_step[i] = steps[i].at("correct").get<bool>();
  JudgeVerdict v = make_verdict(scenario_id, model, per_step);
  if (v.overall != overall) throw ConfigError("judge verdict: overall is not the conjunction of per_step");
  v.self_inconsistent = inconsistent;
  return v;
}

json to_json(const Judgement& j) {
  json outcomes = json::array();
  for (const auto& o : j.outcomes) {
    json e{{"judge_model_id", o.judge_model_id}};
    e["verdict"] = o.verdict ? to_json(*o.verdict) : json(nullptr);
    e["error"] = o.error;
    outcomes.push_back(e);
  }
  json out{{"scenario_id", j.scenario_id}, {"status", to_string(j.status)}, {"outcomes", outcomes}};
  out["accepted"] = j.combined ? json(j.combined->accepted) : json(nullptr);
  return out;
}

Judgement judgement_from_json(const json& doc) {
  FieldReader r(doc, "judgement");
  Judgement j;
  j.scenario_id = r.required_string("scenario_id");
  const auto status = r.required_string("status");
  const auto st = parse_judgement_status(status);
  if (!st) throw ConfigError("judgement: unknown status '" + status + "'");
  j.status = *st;
  const json& outcomes = r.required("outcomes");
  r.optional("accepted");
  r.finish();
  for (const auto& o : outcomes) {
    FieldReader orr(o, "judgement outcome");
    JudgeOutcome out;
    out.judge_model_id = orr.required_string("judge_model_id");
    const json* v = orr.optional("verdict");
    if (v && !v->is_null()) out.verdict = judge_verdict_from_json(*v);
    out.error = orr.string_or("error", "");
    orr.finish();
    j.outcomes.push_back(std::move(out));
  }
  if (j.outcomes.size() == 2 && j.outcomes[0].verdict && j.outcomes[1].verdict) {
    j.combined = combine(*j.outcomes[0].verdict, *j.outcomes[1].verdict);
  }
  return j;
}

}  // namespace stpasec
