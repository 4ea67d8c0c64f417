#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stpasec/control_structure.hpp"
#include "stpasec/cve_client.hpp"
#include "stpasec/llm_gateway.hpp"
#include "stpasec/tech_identifier.hpp"
#include "stpasec/vuln_filter.hpp"

namespace stpasec {

inline constexpr std::string_view kGenerationTemplateVersion = "attack-steps-v1";
extern const std::string_view kGenerationTemplate;

// Declared per device; we do not infer ML techniques.
struct MlAttackContext {
  std::string ml_technique;
  std::string ml_attack_name;
  std::string ml_attack_description;

  void validate() const;
  static MlAttackContext from_json(const json& doc);
  static MlAttackContext load(const std::filesystem::path& path);
};

enum class StageName { Reconnaissance, GainingAccess, PrivilegeEscalation, AttackExecution, Impact };

inline constexpr std::array<StageName, 5> kStageOrder = {
    StageName::Reconnaissance, StageName::GainingAccess, StageName::PrivilegeEscalation,
    StageName::AttackExecution, StageName::Impact};

// "Reconnaissance", "Gaining access", "Privilege escalation", "Attack execution", "Impact"
std::string_view display_name(StageName s);

struct AttackStage {
  StageName name{};
  std::string narrative;

  bool operator==(const AttackStage&) const = default;
};

struct ScenarioMetadata {
  std::string device_name;
  TechnologyFactor factor{};
  std::string keyword;
  std::string cve_id;
  std::string ml_attack_name;
  std::string prompt_hash;
  std::string model_id;
};

struct AttackScenario {
  std::string device_name;
  TechnologyFactor factor{};
  std::string keyword;
  std::string cve_id;
  std::string ml_attack_name;
  std::vector<AttackStage> stages;  // exactly five, canonical order
  std::string prompt_hash;
  std::string model_id;

  // "<device>/<factor code>/<keyword>/<cve id>"
  std::string id() const;
  bool operator==(const AttackScenario&) const = default;
};

class ScenarioParseError : public Error {
 public:
  enum class Kind { Missing, OutOfOrder, Duplicated, EmptyNarrative };
  ScenarioParseError(Kind kind, StageName stage, std::string message)
      : Error(std::move(message)), kind_(kind), stage_(stage) {}
  Kind kind() const { return kind_; }
  StageName stage() const { return stage_; }

 private:
  Kind kind_;
  StageName stage_;
};

// A narrative contains a fenced code block, a shell prompt line, or a known
// command string.
class CodeContentError : public Error {
 public:
  CodeContentError(StageName stage, std::string message) : Error(std::move(message)), stage_(stage) {}
  StageName stage() const { return stage_; }

 private:
  StageName stage_;
};

// Empty when the narrative passes the no-exploit-code heuristic, otherwise
// the offending fragment.
std::optional<std::string> find_code_content(std::string_view narrative);

// If `line` is a stage header, returns the stage and any narrative text that
// follows the header on the same line.
std::optional<std::pair<StageName, std::string>> match_stage_header(std::string_view line);

std::string render_generation_prompt(const ControlStructure& structure, const MlAttackContext& ml,
                                     TechnologyFactor factor, std::string_view keyword, const CveRecord& cve);

AttackScenario parse_scenario(std::string_view text, const ScenarioMetadata& metadata);

// Canonical text form: one "**Stage:** narrative" block per stage.
std::string serialize_stages(const AttackScenario& scenario);

struct GeneratorOptions {
  std::string model_id = "gpt-4o";
  double temperature = kDefaultTemperature;
};

// Throws PreconditionError unless verdict.relevant, FormatViolationError when
// the model never yields a parseable scenario.
AttackScenario generate(const ControlStructure& structure, const MlAttackContext& ml,
                        const RelevanceVerdict& verdict, LlmGateway& gateway,
                        const GeneratorOptions& options = {});

json to_json(const AttackScenario& s);
AttackScenario attack_scenario_from_json(const json& j);

}  // namespace stpasec
