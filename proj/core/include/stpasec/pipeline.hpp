#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stpasec/control_structure.hpp"
#include "stpasec/cve_client.hpp"
#include "stpasec/llm_gateway.hpp"
#include "stpasec/report.hpp"
#include "stpasec/scenario.hpp"
#include "stpasec/tech_identifier.hpp"

namespace stpasec {

std::string_view tool_version();

struct DeviceProfile {
  std::filesystem::path dir;
  ControlStructure structure;
  DocumentCorpus corpus;
  MlAttackContext ml;
  DeviceAnnotations annotations;
};

// Reads <dir>/device.json (or device.yaml):
// {control_structure, corpus, ml_context, annotations?} with paths relative to dir.
DeviceProfile load_device_profile(const std::filesystem::path& dir);

enum class RunMode { Live, Mock };
enum class GenerationScope { Relevant, Verified };

struct ModelRoles {
  std::string extractor = "gpt-4o";
  std::string filter = "gpt-4o";
  std::string generator = "gpt-4o";
  std::array<std::string, 2> judges{"o3", "gemini-2.5-pro"};
};

struct CveSourceConfig {
  std::string type = "fixture";  // "fixture" or "nvd"
  std::filesystem::path fixture_dir;
  NvdOptions nvd;
};

struct RunConfig {
  std::filesystem::path device_profile;
  RunMode mode = RunMode::Mock;
  std::optional<std::filesystem::path> provider_config;
  std::optional<std::filesystem::path> mock_script;
  std::optional<std::filesystem::path> gazetteer;
  std::vector<std::string> extractors{"gazetteer", "llm"};
  CveSourceConfig cve_source;
  int top_n = kDefaultTopN;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> cache_dir;
  std::chrono::seconds max_cache_age{std::chrono::hours(24)};
  int concurrency = 4;
  double requests_per_second = 5.0;
  ModelRoles models;
  double temperature = kDefaultTemperature;
  GenerationScope generation_scope = GenerationScope::Relevant;
  std::optional<std::filesystem::path> audit_log;

  // Throws ConfigError naming the first problem.
  void validate() const;
  // Analysis-affecting settings only; paths are reported in the run block.
  json snapshot() const;
};

// Reads a run config; "devices" expands to one RunConfig per listed profile.
// Relative paths resolve against the config file's directory.
std::vector<RunConfig> load_run_configs(const std::filesystem::path& path);

// Long-lived collaborators shared by the stages of a run.
struct PipelineServices {
  std::shared_ptr<LlmGateway> gateway;
  std::shared_ptr<CveClient> cve;
  std::vector<std::shared_ptr<Extractor>> extractors;
};

// Builds services from the config: mock or live providers, CVE source and
// extractor backends. Throws ConfigError (for example, a missing credential
// variable in live mode).
PipelineServices make_services(const RunConfig& cfg);

RunReport run_pipeline(const RunConfig& cfg);
RunReport run_pipeline(const RunConfig& cfg, const DeviceProfile& profile, PipelineServices& services);

// Re-judges every generated scenario in `report` and refreshes its metrics.
void rejudge(RunReport& report, const RunConfig& cfg, LlmGateway& gateway);

// Writes <device>.report.json and <device>.report.md atomically into dir.
std::pair<std::filesystem::path, std::filesystem::path> write_report(const RunReport& report,
                                                                     const std::filesystem::path& dir);
std::string report_basename(const std::string& device_name);

}  // namespace stpasec
