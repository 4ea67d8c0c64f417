#include "stpasec/scenario.hpp"

#include <algorithm>
#include <cctype>

#include "stpasec/util.hpp"

namespace stpasec {

const std::string_view kGenerationTemplate =
    "Act as a security engineer who has the task of identifying the steps that an adversary follows to cause a "
    "security breach in an ML-enabled medical system. An ML-enabled system comprises an ML-enabled component "
    "collecting inputs from multiple peripheral devices and sending the predicted output to another peripheral "
    "device. A security breach is an event where a malicious attacker compromises the overall system’s "
    "confidentiality, integrity, or availability. You are given a system description, a data flow, an ML attack, a "
    "targeted input peripheral component, a targeted technology, and a known vulnerability in the input component. "
    "Give a list of steps to show how an adversary can exploit the vulnerability to mislead the ML-enabled component "
    "and how that affects the action of the output device on the patient.\n"
    "Constraints:\n"
    "- Do NOT include exploit code, commands, payloads\n"
    "- Keep each step concise and high-level.\n"
    "- You MUST use exactly these 5 step names, in this order:\n"
    "  1) Reconnaissance\n"
    "  2) Gaining access\n"
    "  3) Privilege escalation\n"
    "  4) Attack execution\n"
    "  5) Impact\n"
    "System Description: {system description}\n"
    "Data flow: {derive_data_flow}\n"
    "ML attack: {ml context}\n"
    "Targeted technology: {keyword}\n"
    "Known vulnerability (CVE):\n"
    "- CVE: {cve_id}\n"
    "- CNA: {cna}\n"
    "- Description: {cve_description}\n";

void MlAttackContext::validate() const {
  if (util::trim(ml_technique).empty()) throw ConfigError("ML attack context: empty ml_technique");
  if (util::trim(ml_attack_name).empty()) throw ConfigError("ML attack context: empty ml_attack_name");
  if (util::trim(ml_attack_description).empty()) throw ConfigError("ML attack context: empty ml_attack_description");
}

MlAttackContext MlAttackContext::from_json(const json& doc) {
  FieldReader r(doc, "ML attack context");
  MlAttackContext ml;
  ml.ml_technique = r.required_string("ml_technique");
  ml.ml_attack_name = r.required_string("ml_attack_name");
  ml.ml_attack_description = r.required_string("ml_attack_description");
  r.finish();
  ml.validate();
  return ml;
}

MlAttackContext MlAttackContext::load(const std::filesystem::path& path) {
  try {
    return from_json(load_document(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string_view display_name(StageName s) {
  switch (s) {
    case StageName::Reconnaissance: return "Reconnaissance";
    case StageName::GainingAccess: return "Gaining access";
    case StageName::PrivilegeEscalation: return "Privilege escalation";
    case StageName::AttackExecution: return "Attack execution";
    case StageName::Impact: return "Impact";
  }
  return "?";
}

std::string AttackScenario::id() const {
  return device_name + "/" + std::string(short_code(factor)) + "/" + keyword + "/" + cve_id;
}

namespace {

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_adornment(char c) { return c == '*' || c == '_' || c == '#' || c == '>' || c == '`'; }

void skip_space(std::string_view& s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
}

// Strips markdown adornments and whitespace; returns how many adornment
// characters were removed.
int skip_adornments(std::string_view& s) {
  int n = 0;
  for (;;) {
    skip_space(s);
    if (!s.empty() && is_adornment(s.front())) {
      s.remove_prefix(1);
      ++n;
    } else {
      return n;
    }
  }
}

// "1)", "1.", "1:", "(1)", "1 -"
void skip_numbering(std::string_view& s) {
  std::string_view t = s;
  bool paren = false;
  if (!t.empty() && t.front() == '(') {
    paren = true;
    t.remove_prefix(1);
  }
  std::size_t digits = 0;
  while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) ++digits;
  if (digits == 0) return;
  t.remove_prefix(digits);
  if (paren) {
    if (t.empty() || t.front() != ')') return;
    t.remove_prefix(1);
  } else if (!t.empty() && (t.front() == ')' || t.front() == '.' || t.front() == ':')) {
    t.remove_prefix(1);
  } else {
    skip_space(t);
    if (!t.empty() && t.front() == '-') {
      t.remove_prefix(1);
    } else if (t.empty() || !std::isspace(static_cast<unsigned char>(s[s.size() - t.size() - 1]))) {
      return;
    }
  }
  s = t;
}

// Case-insensitive prefix match where each space in `phrase` matches one or
// more whitespace characters. Returns the number of characters consumed.
std::optional<std::size_t> match_phrase(std::string_view s, std::string_view phrase) {
  std::size_t i = 0;
  for (char p : phrase) {
    if (p == ' ') {
      if (i >= s.size() || !std::isspace(static_cast<unsigned char>(s[i]))) return std::nullopt;
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      continue;
    }
    if (i >= s.size() || std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(p))) {
      return std::nullopt;
    }
    ++i;
  }
  return i;
}

}  // namespace

std::optional<std::pair<StageName, std::string>> match_stage_header(std::string_view line) {
  std::string_view s = line;
  int opened = skip_adornments(s);
  if (s.size() >= 2 && (s.front() == '-' || s.front() == '+') && std::isspace(static_cast<unsigned char>(s[1]))) {
    s.remove_prefix(1);
    opened += skip_adornments(s);
  }
  if (util::istarts_with(s, "step") && (s.size() == 4 || !is_word(s[4]))) {
    s.remove_prefix(4);
    skip_space(s);
  }
  skip_numbering(s);
  opened += skip_adornments(s);

  for (StageName stage : kStageOrder) {
    std::string_view rest = s;
    const auto used = match_phrase(rest, display_name(stage));
    if (!used) continue;
    rest.remove_prefix(*used);
    if (!rest.empty() && is_word(rest.front())) continue;

    std::string_view tail = rest;
    int closed = skip_adornments(tail);
    bool separator = false;
    if (!tail.empty() && (tail.front() == ':' || tail.front() == '-')) {
      tail.remove_prefix(1);
      separator = true;
      closed += skip_adornments(tail);
    }
    const bool bold_header = opened > 0 && closed > 0;
    if (tail.empty() || separator || bold_header) return std::make_pair(stage, util::trim(tail));
  }
  return std::nullopt;
}

std::optional<std::string> find_code_content(std::string_view narrative) {
  if (narrative.find("```") != std::string_view::npos) return "```";
  if (narrative.find("~~~") != std::string_view::npos) return "~~~";
  static const std::vector<std::string> kShellCommands = {"sudo", "rm",  "wget",  "curl", "nc",   "python", "bash",
                                                          "sh",   "chmod", "nmap", "ssh",  "echo", "cat",    "perl"};
  for (const auto& raw : util::split_lines(narrative)) {
    const std::string line = util::trim(raw);
    if (line.rfind("$ ", 0) == 0) return line;
    if (line.rfind("# ", 0) == 0) {
      std::string_view rest = std::string_view(line).substr(2);
      const auto word = rest.substr(0, rest.find(' '));
      if (std::find(kShellCommands.begin(), kShellCommands.end(), word) != kShellCommands.end()) return line;
    }
  }
  static const std::vector<std::string> kNeedles = {
      "sudo ",       "rm -rf",       "wget http",   "curl http",   "curl -",          "nc -",
      "netcat -",    "msfconsole",   "msfvenom",    "chmod +x",    "/bin/sh",         "/bin/bash",
      "powershell -", "python -c",   "bash -c",     "nmap -",      "<script",         "exploit/multi/",
      "exploit/windows/", "exploit/linux/", "exploit/unix/"};
  const std::string lower = util::to_lower(narrative);
  for (const auto& needle : kNeedles) {
    if (lower.find(needle) != std::string::npos) return needle;
  }
  return std::nullopt;
}

namespace {

std::string ml_context_text(const MlAttackContext& ml) {
  return ml.ml_attack_name + " against " + ml.ml_technique + ". " + ml.ml_attack_description;
}

}  // namespace

std::string render_generation_prompt(const ControlStructure& structure, const MlAttackContext& ml,
                                     TechnologyFactor factor, std::string_view keyword, const CveRecord& cve) {
  (void)factor;
  return util::substitute(kGenerationTemplate, {{"system description", structure.system_description},
                                                {"derive_data_flow", derive_data_flow(structure)},
                                                {"ml context", ml_context_text(ml)},
                                                {"keyword", std::string(keyword)},
                                                {"cve_id", cve.cve_id},
                                                {"cna", cve.cna.empty() ? "unknown" : cve.cna},
                                                {"cve_description", cve.description}});
}

AttackScenario parse_scenario(std::string_view text, const ScenarioMetadata& metadata) {
  struct Block {
    StageName stage;
    std::string body;
  };
  std::vector<Block> blocks;
  for (const auto& line : util::split_lines(text)) {
    if (auto header = match_stage_header(line)) {
      blocks.push_back({header->first, header->second});
    } else if (!blocks.empty()) {
      blocks.back().body += '\n';
      blocks.back().body += line;
    }
  }

  using Kind = ScenarioParseError::Kind;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (blocks[j].stage == blocks[i].stage) {
        throw ScenarioParseError(Kind::Duplicated, blocks[i].stage,
                                 "duplicated stage '" + std::string(display_name(blocks[i].stage)) + "'");
      }
    }
  }
  for (StageName stage : kStageOrder) {
    const bool present =
        std::any_of(blocks.begin(), blocks.end(), [&](const Block& b) { return b.stage == stage; });
    if (!present) {
      throw ScenarioParseError(Kind::Missing, stage, "missing stage '" + std::string(display_name(stage)) + "'");
    }
  }
  for (std::size_t i = 0; i < kStageOrder.size(); ++i) {
    if (blocks[i].stage != kStageOrder[i]) {
      throw ScenarioParseError(Kind::OutOfOrder, blocks[i].stage,
                               "stage '" + std::string(display_name(blocks[i].stage)) + "' is out of order (expected '" +
                                   std::string(display_name(kStageOrder[i])) + "' at position " +
                                   std::to_string(i + 1) + ")");
    }
  }

  AttackScenario s;
  s.device_name = metadata.device_name;
  s.factor = metadata.factor;
  s.keyword = metadata.keyword;
  s.cve_id = metadata.cve_id;
  s.ml_attack_name = metadata.ml_attack_name;
  s.prompt_hash = metadata.prompt_hash;
  s.model_id = metadata.model_id;
  for (const auto& b : blocks) {
    std::string narrative = util::trim(b.body);
    if (narrative.empty()) {
      throw ScenarioParseError(Kind::EmptyNarrative, b.stage,
                               "stage '" + std::string(display_name(b.stage)) + "' has an empty narrative");
    }
    if (auto code = find_code_content(narrative)) {
      throw CodeContentError(b.stage, "stage '" + std::string(display_name(b.stage)) +
                                          "' contains command or code content: " + *code);
    }
    s.stages.push_back({b.stage, std::move(narrative)});
  }
  return s;
}

std::string serialize_stages(const AttackScenario& scenario) {
  std::string out;
  for (const auto& st : scenario.stages) {
    if (!out.empty()) out += "\n\n";
    out += "**";
    out += display_name(st.name);
    out += ":** ";
    out += st.narrative;
  }
  out += '\n';
  return out;
}

AttackScenario generate(const ControlStructure& structure, const MlAttackContext& ml,
                        const RelevanceVerdict& verdict, LlmGateway& gateway, const GeneratorOptions& options) {
  if (!verdict.relevant) {
    throw PreconditionError("scenario generation requires a relevant verdict (" + verdict.query.cve.cve_id + ")");
  }
  const auto& q = verdict.query;
  LlmRequest req;
  req.prompt = render_generation_prompt(structure, ml, q.factor, q.keyword, q.cve);
  req.temperature = options.temperature;
  req.model_id = options.model_id;

  ScenarioMetadata meta{structure.device_name, q.factor, q.keyword, q.cve.cve_id, ml.ml_attack_name,
                        prompt_hash(req.prompt), options.model_id};
  const auto validator = [&meta](std::string_view text) -> std::optional<std::string> {
    try {
      parse_scenario(text, meta);
      return std::nullopt;
    } catch (const ScenarioParseError& e) {
      return e.what();
    } catch (const CodeContentError& e) {
      return e.what();
    }
  };
  const auto resp = gateway.complete_constrained(req, validator);
  meta.model_id = resp.model_id;
  return parse_scenario(resp.text, meta);
}

json to_json(const AttackScenario& s) {
  json stages = json::array();
  for (const auto& st : s.stages) stages.push_back({{"name", display_name(st.name)}, {"narrative", st.narrative}});
  return {{"device_name", s.device_name},     {"factor", display_name(s.factor)}, {"keyword", s.keyword},
          {"cve_id", s.cve_id},               {"ml_attack_name", s.ml_attack_name}, {"stages", stages},
          {"prompt_hash", s.prompt_hash},     {"model_id", s.model_id}};
}

AttackScenario attack_scenario_from_json(const json& j) {
  FieldReader r(j, "attack scenario");
  AttackScenario s;
  s.device_name = r.required_string("device_name");
  const auto factor = r.required_string("factor");
  const auto f = parse_factor(factor);
  if (!f) throw ConfigError("attack scenario: unknown factor '" + factor + "'");
  s.factor = *f;
  s.keyword = r.required_string("keyword");
  s.cve_id = r.required_string("cve_id");
  s.ml_attack_name = r.required_string("ml_attack_name");
  s.prompt_hash = r.required_string("prompt_hash");
  s.model_id = r.required_string("model_id");
  const json& stages = r.required("stages");
  r.finish();
  if (!stages.is_array() || stages.size() != kStageOrder.size()) {
    throw ConfigError("attack scenario: expected exactly five stages");
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    FieldReader sr(stages[i], "attack scenario: stages[" + std::to_string(i) + "]");
    const auto name = sr.required_string("name");
    const auto narrative = sr.required_string("narrative");
    sr.finish();
    if (!util::iequals(name, display_name(kStageOrder[i]))) {
      throw ConfigError("attack scenario: stage " + std::to_string(i + 1) + " must be '" +
                        std::string(display_name(kStageOrder[i])) + "', found '" + name + "'");
    }
    if (util::trim(narrative).empty()) throw ConfigError("attack scenario: empty narrative for '" + name + "'");
    s.stages.push_back({kStageOrder[i], narrative});
  }
  return s;
}

}  // namespace stpasec
