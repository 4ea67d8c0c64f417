#include <CLI11.hpp>

#include <iostream>
#include <regex>

#include "stpasec/pipeline.hpp"
#include "stpasec/util.hpp"

namespace fs = std::filesystem;
using namespace stpasec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitItemErrors = 2;

// "90", "90s", "30m", "24h", "7d"
std::chrono::seconds parse_duration(const std::string& text) {
  static const std::regex kDuration("^([0-9]+)([smhd]?)$");
  std::smatch m;
  if (!std::regex_match(text, m, kDuration)) throw ConfigError("invalid duration '" + text + "' (use e.g. 90s, 30m, 24h, 7d)");
  const long long n = std::stoll(m[1].str());
  const std::string unit = m[2].str();
  if (unit == "m") return std::chrono::minutes(n);
  if (unit == "h") return std::chrono::hours(n);
  if (unit == "d") return std::chrono::hours(24 * n);
  return std::chrono::seconds(n);
}

struct Overrides {
  std::string mode;
  int top_n = 0;
  std::string out;
  std::string max_cache_age;
  int concurrency = 0;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--mode", o.mode, "mock or live")->check(CLI::IsMember({"mock", "live"}));
  cmd->add_option("--top-n", o.top_n, "CVE records per technology keyword");
  cmd->add_option("--out", o.out, "output directory for reports");
  cmd->add_option("--max-cache-age", o.max_cache_age, "reuse cached CVE queries younger than this (e.g. 24h)");
  cmd->add_option("--concurrency", o.concurrency, "maximum in-flight requests per provider");
}

std::vector<RunConfig> load_configs(const std::string& path, const Overrides& o) {
  auto configs = load_run_configs(path);
  for (auto& c : configs) {
    if (!o.mode.empty()) c.mode = o.mode == "live" ? RunMode::Live : RunMode::Mock;
    if (o.top_n != 0) c.top_n = o.top_n;
    if (!o.out.empty()) c.output_dir = o.out;
    if (!o.max_cache_age.empty()) c.max_cache_age = parse_duration(o.max_cache_age);
    if (o.concurrency != 0) c.concurrency = o.concurrency;
    c.validate();
  }
  return configs;
}

int cmd_validate(const std::vector<RunConfig>& configs) {
  for (const auto& cfg : configs) {
    const auto profile = load_device_profile(cfg.device_profile);
    const auto points = enumerate_injection_points(profile.structure);
    std::cout << profile.structure.device_name << ": " << profile.structure.components.size() << " components, "
              << profile.structure.links.size() << " links, " << profile.corpus.documents.size() << " documents, "
              << points.size() << " injection points\n";
    std::cout << "  data flow: " << derive_data_flow(profile.structure) << "\n";
  }
  std::cout << "configuration is valid\n";
  return kExitOk;
}

int cmd_analyze(const std::vector<RunConfig>& configs) {
  std::vector<RunReport> reports;
  long long item_errors = 0;
  for (const auto& cfg : configs) {
    RunReport r = run_pipeline(cfg);
    item_errors += r.item_errors();
    const auto& row = r.metrics.row;
    std::cout << r.device_name << ": " << r.technologies.entries.size() << " technologies, " << row.retrieved_cve
              << " CVEs, " << row.auto_cve << " relevant, " << r.scenarios.size() << " scenarios ("
              << row.scenarios_accepted << " accepted, " << row.scenarios_unjudgeable << " unjudgeable), "
              << r.item_errors() << " item errors\n";
    reports.push_back(std::move(r));
  }
  if (reports.size() > 1) {
    const fs::path dir = configs.front().output_dir;
    util::write_file_atomic((dir / "summary.md").string(), render_summary_markdown(reports));
    util::write_file_atomic((dir / "summary.json").string(), summary_json(reports).dump(2) + "\n");
    std::cout << "\n" << render_summary_markdown(reports);
  }
  return item_errors > 0 ? kExitItemErrors : kExitOk;
}

RunReport read_report(const std::string& path) {
  return run_report_from_json(load_document(path));
}

int cmd_judge(const std::vector<RunConfig>& configs, const std::vector<std::string>& report_paths) {
  const RunConfig& cfg = configs.front();
  long long item_errors = 0;
  for (const auto& path : report_paths) {
    RunReport report = read_report(path);
    PipelineServices services = make_services(cfg);
    const fs::path audit = cfg.output_dir / (report_basename(report.device_name) + ".judge.audit.ndjson");
    services.gateway->set_audit_log(std::make_shared<AuditLog>(audit));
    rejudge(report, cfg, *services.gateway);
    report.config["models"]["judges"] = cfg.models.judges;
    const auto [json_path, md_path] = write_report(report, cfg.output_dir);
    std::cout << report.device_name << ": " << report.metrics.row.scenarios_accepted << "/"
              << report.metrics.row.scenarios_total << " accepted, written to " << json_path.string() << "\n";
    item_errors += report.item_errors();
  }
  return item_errors > 0 ? kExitItemErrors : kExitOk;
}

int cmd_metrics(const std::vector<std::string>& report_paths, bool as_json) {
  std::vector<RunReport> reports;
  bool invalid = false;
  for (const auto& path : report_paths) {
    const json doc = load_document(path);
    for (const auto& p : validate_report(doc)) {
      std::cerr << path << ": " << p << "\n";
      invalid = true;
    }
    reports.push_back(run_report_from_json(doc));
  }
  if (invalid) return kExitFatal;
  if (as_json) {
    std::cout << summary_json(reports).dump(2) << "\n";
  } else {
    std::cout << render_summary_markdown(reports);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vulnerability-driven attack scenario generation for ML-enabled medical devices"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::vector<std::string> report_paths;
  bool as_json = false;
  std::string cache_dir;

  auto* validate = app.add_subcommand("validate", "check the run config, device profiles and control structures");
  validate->add_option("--config", config_path, "run configuration file")->required();
  add_override_flags(validate, overrides);

  auto* analyze = app.add_subcommand("analyze", "run the full pipeline and write per-device reports");
  analyze->add_option("--config", config_path, "run configuration file")->required();
  add_override_flags(analyze, overrides);

  auto* judge = app.add_subcommand("judge", "re-judge the scenarios of existing reports");
  judge->add_option("--config", config_path, "run configuration file")->required();
  judge->add_option("--report", report_paths, "report JSON file")->required();
  add_override_flags(judge, overrides);

  auto* metrics = app.add_subcommand("metrics", "validate reports and print the summary table");
  metrics->add_option("--report", report_paths, "report JSON file")->required();
  metrics->add_flag("--json", as_json, "print the summary as JSON");

  auto* cache = app.add_subcommand("cache", "manage the CVE query cache");
  cache->require_subcommand(1);
  auto* cache_clear = cache->add_subcommand("clear", "delete cached CVE queries");
  cache_clear->add_option("--config", config_path, "run configuration file");
  cache_clear->add_option("--dir", cache_dir, "cache directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(load_configs(config_path, overrides));
    if (*analyze) return cmd_analyze(load_configs(config_path, overrides));
    if (*judge) return cmd_judge(load_configs(config_path, overrides), report_paths);
    if (*metrics) return cmd_metrics(report_paths, as_json);
    if (*cache_clear) {
      std::vector<fs::path> dirs;
      if (!cache_dir.empty()) dirs.emplace_back(cache_dir);
      if (!config_path.empty()) {
        for (const auto& c : load_run_configs(config_path)) {
          if (c.cache_dir) dirs.push_back(*c.cache_dir);
        }
      }
      if (dirs.empty()) throw ConfigError("cache clear needs --dir or a config with cache_dir");
      std::sort(dirs.begin(), dirs.end());
      dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
      std::size_t removed = 0;
      for (const auto& d : dirs) removed += clear_cve_cache(d);
      std::cout << "removed " << removed << " cached queries\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitOk;
}
