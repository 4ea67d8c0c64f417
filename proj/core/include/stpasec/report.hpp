#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stpasec/control_structure.hpp"
#include "stpasec/cve_client.hpp"
#include "stpasec/judge.hpp"
#include "stpasec/metrics.hpp"
#include "stpasec/scenario.hpp"
#include "stpasec/tech_identifier.hpp"
#include "stpasec/vuln_filter.hpp"

namespace stpasec {

enum class RelevanceStatus { Relevant, NotRelevant, Undecided };
std::string_view to_string(RelevanceStatus s);

// Analyst ground truth shipped with a device profile.
struct DeviceAnnotations {
  std::optional<std::set<TechKey>> technologies;
  std::optional<std::set<std::string>> verified_cves;

  static DeviceAnnotations from_json(const json& doc);
  json to_json() const;
};

struct CveFinding {
  TechnologyFactor factor{};
  std::string keyword;
  CveRecord record;
  RelevanceStatus relevance = RelevanceStatus::Undecided;
  std::string raw_token;
  std::string model_id;
  std::string prompt_hash;
  std::string error;
  std::optional<bool> analyst_verified;
};

struct FetchFailure {
  TechnologyFactor factor{};
  std::string keyword;
  std::string error;
};

enum class GenerationStatus { Generated, Failed };

struct ScenarioResult {
  ScenarioMetadata metadata;
  GenerationStatus status = GenerationStatus::Failed;
  std::optional<AttackScenario> scenario;
  std::string error;
  std::optional<Judgement> judgement;

  std::string id() const;
};

struct ReportMetrics {
  CountRow row;
  EffortInputs effort_inputs;
  EffortEstimate effort;
  std::optional<TechEvaluation> tech;
};

struct RunReport {
  std::string tool_version;
  std::string device_name;
  json config = json::object();
  std::vector<InjectionPoint> injection_points;
  std::string data_flow;
  std::string system_description;
  TechnologyList technologies;
  std::vector<FilteredMention> filtered_mentions;
  std::vector<std::string> extractor_errors;
  std::vector<CveFinding> cves;
  std::vector<FetchFailure> fetch_failures;
  std::vector<ScenarioResult> scenarios;
  DeviceAnnotations annotations;
  ReportMetrics metrics;
  // Wall-clock timings and run-specific paths. The only section allowed to
  // differ between replays of the same inputs.
  json run = json::object();

  long long item_errors() const;
};

// Recomputes the metrics block from report content.
ReportMetrics compute_metrics(const RunReport& report);

json to_json(const RunReport& r);
RunReport run_report_from_json(const json& j);

enum class ReportFormat { Json, Markdown };
std::string render_report(const RunReport& r, ReportFormat format);

// Referential-integrity check over a serialized report. Empty when valid.
std::vector<std::string> validate_report(const json& report);

// Table-3-shaped summary over several device reports.
CountTable count_table(const std::vector<RunReport>& reports);
std::string render_summary_markdown(const std::vector<RunReport>& reports);
json summary_json(const std::vector<RunReport>& reports);

}  // namespace stpasec
