#include "stpasec/pipeline.hpp"

#include <algorithm>

#include "parallel.hpp"
#include "stpasec/http_provider.hpp"
#include "stpasec/util.hpp"

namespace stpasec {

namespace fs = std::filesystem;

std::string_view tool_version() { return STPASEC_VERSION; }

// --- device profile -------------------------------------------------------

DeviceProfile load_device_profile(const fs::path& dir) {
  fs::path manifest = dir / "device.json";
  if (!fs::exists(manifest) && fs::exists(dir / "device.yaml")) manifest = dir / "device.yaml";
  if (!fs::exists(manifest)) throw ConfigError("device profile " + dir.string() + " has no device.json");
  FieldReader r(load_document(manifest), manifest.string());
  const auto structure_path = dir / r.required_string("control_structure");
  const auto corpus_path = dir / r.required_string("corpus");
  const auto ml_path = dir / r.required_string("ml_context");
  const auto annotations = r.optional_string("annotations");
  r.finish();

  DeviceProfile p;
  p.dir = dir;
  p.structure = load_control_structure(structure_path);
  const auto problems = validate_structure(p.structure);
  if (!problems.empty()) {
    std::string msg = structure_path.string() + ": invalid control structure:";
    for (const auto& v : problems) msg += "\n  " + v;
    throw ConfigError(msg);
  }
  p.corpus = load_corpus(corpus_path);
  if (p.corpus.device_name != p.structure.device_name) {
    throw ConfigError(corpus_path.string() + ": corpus is for '" + p.corpus.device_name +
                      "' but the control structure describes '" + p.structure.device_name + "'");
  }
  p.ml = MlAttackContext::load(ml_path);
  if (annotations) {
    const auto path = dir / *annotations;
    try {
      p.annotations = DeviceAnnotations::from_json(load_document(path));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return p;
}

// --- run config -------------------------------------------------------------

void RunConfig::validate() const {
  auto need_path = [](const fs::path& p, const std::string& what) {
    if (p.empty()) throw ConfigError(what + " is not set");
    if (!fs::exists(p)) throw ConfigError(what + " does not exist: " + p.string());
  };
  need_path(device_profile, "device profile");
  if (top_n < 1) throw ConfigError("top_n must be at least 1, got " + std::to_string(top_n));
  if (concurrency < 1) throw ConfigError("concurrency must be at least 1, got " + std::to_string(concurrency));
  if (!(requests_per_second > 0)) throw ConfigError("requests_per_second must be positive");
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("temperature must be in [0, 2]");
  if (max_cache_age.count() < 0) throw ConfigError("max cache age must not be negative");
  if (mode == RunMode::Mock) {
    if (!mock_script) throw ConfigError("mock mode needs a mock_script");
    need_path(*mock_script, "mock script");
  } else {
    if (!provider_config) throw ConfigError("live mode needs a provider_config");
    need_path(*provider_config, "provider config");
  }
  if (extractors.empty()) throw ConfigError("at least one extractor backend is required");
  for (const auto& e : extractors) {
    if (e != "gazetteer" && e != "llm") throw ConfigError("unknown extractor backend '" + e + "'");
    if (e == "gazetteer") {
      if (!gazetteer) throw ConfigError("the gazetteer extractor needs a gazetteer file");
      need_path(*gazetteer, "gazetteer");
    }
  }
  if (cve_source.type == "fixture") {
    need_path(cve_source.fixture_dir, "CVE fixture directory");
  } else if (cve_source.type == "nvd") {
    parse_endpoint(cve_source.nvd.endpoint);
  } else {
    throw ConfigError("unknown CVE source type '" + cve_source.type + "'");
  }
  if (models.judges[0] == models.judges[1]) {
    throw ConfigError("the two judge models must differ, got '" + models.judges[0] + "' twice");
  }
}

json RunConfig::snapshot() const {
  return {{"mode", mode == RunMode::Mock ? "mock" : "live"},
          {"top_n", top_n},
          {"extractors", extractors},
          {"cve_source", cve_source.type},
          {"models",
           {{"extractor", models.extractor},
            {"filter", models.filter},
            {"generator", models.generator},
            {"judges", models.judges}}},
          {"temperature", temperature},
          {"judge_temperature", kJudgeTemperature},
          {"generation_scope", generation_scope == GenerationScope::Relevant ? "relevant" : "verified"},
          {"templates",
           {{"relevance", kRelevanceTemplateVersion},
            {"generation", kGenerationTemplateVersion},
            {"judge", kJudgeTemplateVersion}}}};
}

std::vector<RunConfig> load_run_configs(const fs::path& path) {
  const json doc = load_document(path);
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  try {
    FieldReader r(doc, "run config");
    RunConfig cfg;
    std::vector<fs::path> profiles;
    if (auto single = r.optional_string("device_profile")) profiles.push_back(resolve(*single));
    if (const json* list = r.optional("devices")) {
      for (const auto& d : *list) profiles.push_back(resolve(d.get<std::string>()));
    }
    if (profiles.empty()) throw ConfigError("run config: needs 'device_profile' or 'devices'");

    const auto mode = r.string_or("mode", "mock");
    if (mode == "mock") {
      cfg.mode = RunMode::Mock;
    } else if (mode == "live") {
      cfg.mode = RunMode::Live;
    } else {
      throw ConfigError("run config: mode must be 'mock' or 'live', got '" + mode + "'");
    }
    if (auto p = r.optional_string("provider_config")) cfg.provider_config = resolve(*p);
    if (auto p = r.optional_string("mock_script")) cfg.mock_script = resolve(*p);
    if (auto p = r.optional_string("gazetteer")) cfg.gazetteer = resolve(*p);
    if (const json* e = r.optional("extractors")) cfg.extractors = e->get<std::vector<std::string>>();
    if (const json* src = r.optional("cve_source")) {
      FieldReader sr(*src, "run config: cve_source");
      cfg.cve_source.type = sr.string_or("type", "fixture");
      if (auto d = sr.optional_string("fixture_dir")) cfg.cve_source.fixture_dir = resolve(*d);
      cfg.cve_source.nvd.endpoint = sr.string_or("endpoint", cfg.cve_source.nvd.endpoint);
      cfg.cve_source.nvd.api_key_env = sr.string_or("api_key_env", cfg.cve_source.nvd.api_key_env);
      cfg.cve_source.nvd.page_size = static_cast<int>(sr.integer_or("page_size", cfg.cve_source.nvd.page_size));
      sr.finish();
    }
    cfg.top_n = static_cast<int>(r.integer_or("top_n", kDefaultTopN));
    cfg.output_dir = resolve(r.string_or("output_dir", "out"));
    if (auto p = r.optional_string("cache_dir")) cfg.cache_dir = resolve(*p);
    cfg.max_cache_age = std::chrono::seconds(r.integer_or("max_cache_age_seconds", cfg.max_cache_age.count()));
    cfg.concurrency = static_cast<int>(r.integer_or("concurrency", cfg.concurrency));
    cfg.requests_per_second = r.number_or("requests_per_second", cfg.requests_per_second);
    cfg.temperature = r.number_or("temperature", cfg.temperature);
    if (const json* m = r.optional("models")) {
      FieldReader mr(*m, "run config: models");
      cfg.models.extractor = mr.string_or("extractor", cfg.models.extractor);
      cfg.models.filter = mr.string_or("filter", cfg.models.filter);
      cfg.models.generator = mr.string_or("generator", cfg.models.generator);
      if (const json* j = mr.optional("judges")) {
        const auto judges = j->get<std::vector<std::string>>();
        if (judges.size() != 2) throw ConfigError("run config: models.judges must list exactly two models");
        cfg.models.judges = {judges[0], judges[1]};
      }
      mr.finish();
    }
    const auto scope = r.string_or("generation_scope", "relevant");
    if (scope == "relevant") {
      cfg.generation_scope = GenerationScope::Relevant;
    } else if (scope == "verified") {
      cfg.generation_scope = GenerationScope::Verified;
    } else {
      throw ConfigError("run config: generation_scope must be 'relevant' or 'verified', got '" + scope + "'");
    }
    const auto audit_log = r.optional_string("audit_log");
    const auto audit_dir = r.optional_string("audit_dir");
    r.finish();
    if (audit_log && profiles.size() > 1) {
      throw ConfigError("run config: 'audit_log' names one file; use 'audit_dir' with several devices");
    }

    std::vector<RunConfig> out;
    for (const auto& p : profiles) {
      RunConfig c = cfg;
      c.device_profile = p;
      if (audit_log) c.audit_log = resolve(*audit_log);
      if (audit_dir) c.audit_log = resolve(*audit_dir) / (p.filename().string() + ".audit.ndjson");
      out.push_back(std::move(c));
    }
    return out;
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --- services ---------------------------------------------------------------

PipelineServices make_services(const RunConfig& cfg) {
  PipelineServices s;
  GatewayOptions gopts;
  gopts.max_in_flight = cfg.concurrency;
  s.gateway = std::make_shared<LlmGateway>(gopts);
  const bool mock = cfg.mode == RunMode::Mock;
  if (mock) {
    const auto& path = *cfg.mock_script;
    MockScript script = path.extension() == ".ndjson" ? MockScript::from_audit_log(path) : MockScript::load(path);
    s.gateway->set_fallback_provider(std::make_shared<MockProvider>(std::move(script)));
    s.gateway->set_sleep_function([](std::chrono::milliseconds) {});
  } else {
    const auto providers = load_provider_configs(*cfg.provider_config);
    for (const auto& pc : providers) s.gateway->register_provider(pc.model_id, make_live_provider(pc));
    std::vector<std::string> needed = {cfg.models.filter, cfg.models.generator, cfg.models.judges[0],
                                       cfg.models.judges[1]};
    if (std::find(cfg.extractors.begin(), cfg.extractors.end(), "llm") != cfg.extractors.end()) {
      needed.push_back(cfg.models.extractor);
    }
    for (const auto& m : needed) {
      const bool found =
          std::any_of(providers.begin(), providers.end(), [&](const ProviderConfig& pc) { return pc.model_id == m; });
      if (!found) throw ConfigError("no provider configured for model '" + m + "'");
    }
  }

  std::shared_ptr<CveSource> source;
  if (cfg.cve_source.type == "nvd") {
    source = std::make_shared<NvdCveSource>(cfg.cve_source.nvd);
  } else {
    source = std::make_shared<FixtureCveSource>(cfg.cve_source.fixture_dir);
  }
  CveClientOptions copts;
  copts.cache_dir = cfg.cache_dir;
  copts.max_cache_age = cfg.max_cache_age;
  copts.requests_per_second = mock && cfg.cve_source.type == "fixture" ? 1e9 : cfg.requests_per_second;
  s.cve = std::make_shared<CveClient>(source, copts);
  if (cfg.cve_source.type == "fixture") s.cve->set_sleep_function([](std::chrono::milliseconds) {});

  for (const auto& e : cfg.extractors) {
    if (e == "gazetteer") {
      s.extractors.push_back(std::make_shared<GazetteerExtractor>(Gazetteer::load(*cfg.gazetteer)));
    } else {
      s.extractors.push_back(std::make_shared<LlmExtractor>(*s.gateway, cfg.models.extractor, cfg.temperature));
    }
  }
  return s;
}

// --- pipeline ---------------------------------------------------------------

namespace {

class StageTimer {
 public:
  explicit StageTimer(json& sink) : sink_(sink), start_(std::chrono::steady_clock::now()), last_(start_) {}
  void lap(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    sink_[stage] = std::chrono::duration_cast<std::chrono::milliseconds>(now - last_).count();
    last_ = now;
  }
  long long total_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  json& sink_;
  std::chrono::steady_clock::time_point start_, last_;
};

const CveFinding* find_finding(const RunReport& report, const ScenarioMetadata& m) {
  for (const auto& c : report.cves) {
    if (c.factor == m.factor && c.keyword == m.keyword && c.record.cve_id == m.cve_id) return &c;
  }
  return nullptr;
}

Judgement judge_one(const RunReport& report, const AttackScenario& scenario, const RunConfig& cfg,
                    LlmGateway& gateway) {
  ScenarioMetadata m{scenario.device_name, scenario.factor, scenario.keyword, scenario.cve_id, scenario.ml_attack_name,
                     scenario.prompt_hash, scenario.model_id};
  const CveFinding* finding = find_finding(report, m);
  if (!finding) throw PreconditionError("scenario " + scenario.id() + " has no CVE finding in the report");
  JudgeContext ctx{report.system_description, report.data_flow, finding->record};
  return judge_scenario(scenario, ctx, cfg.models.judges, gateway);
}

}  // namespace

RunReport run_pipeline(const RunConfig& cfg, const DeviceProfile& profile, PipelineServices& services) {
  if (cfg.generation_scope == GenerationScope::Verified && !profile.annotations.verified_cves) {
    throw ConfigError("generation scope 'verified' needs verified_cves annotations for " +
                      profile.structure.device_name);
  }
  RunReport report;
  report.tool_version = std::string(tool_version());
  report.device_name = profile.structure.device_name;
  report.config = cfg.snapshot();
  report.annotations = profile.annotations;
  report.run = {{"device_profile", profile.dir.string()}, {"timings_ms", json::object()}};
  StageTimer timer(report.run["timings_ms"]);
  LlmGateway& gateway = *services.gateway;

  // 1. control structure
  report.system_description = profile.structure.system_description;
  report.data_flow = derive_data_flow(profile.structure);
  report.injection_points = enumerate_injection_points(profile.structure);
  timer.lap("structure");

  // 2. technologies
  const FactorSet all_factors(kAllFactors.begin(), kAllFactors.end());
  std::vector<std::vector<TechnologyMention>> lists;
  for (const auto& ex : services.extractors) {
    try {
      const auto mentions = extract(profile.corpus, all_factors, *ex);
      lists.push_back(exact_match_filter(mentions, profile.corpus, &report.filtered_mentions));
    } catch (const BackendUnavailableError& e) {
      report.extractor_errors.push_back(ex->name() + ": " + e.what());
    }
  }
  report.technologies = merge_and_dedup(lists, report.device_name);
  timer.lap("technologies");

  // 3. CVE retrieval
  struct Fetched {
    std::vector<CveRecord> records;
    std::string error;
  };
  const auto fetched =
      detail::parallel_map(report.technologies.entries, cfg.concurrency, [&](const TechnologyEntry& e) {
        Fetched f;
        try {
          f.records = services.cve->fetch_recent({e.keyword, cfg.top_n});
        } catch (const std::exception& ex) {
          f.error = ex.what();
        }
        return f;
      });
  for (std::size_t i = 0; i < fetched.size(); ++i) {
    const auto& entry = report.technologies.entries[i];
    if (!fetched[i].error.empty()) {
      report.fetch_failures.push_back({entry.factor, entry.keyword, fetched[i].error});
      continue;
    }
    for (const auto& rec : fetched[i].records) {
      CveFinding f;
      f.factor = entry.factor;
      f.keyword = entry.keyword;
      f.record = rec;
      if (profile.annotations.verified_cves) f.analyst_verified = profile.annotations.verified_cves->count(rec.cve_id) > 0;
      report.cves.push_back(std::move(f));
    }
  }
  timer.lap("cve_retrieval");

  // 4. relevance filter
  const std::string device_description = profile.structure.device_name + ": " + profile.structure.system_description;
  std::vector<RelevanceQuery> queries;
  for (const auto& c : report.cves) queries.push_back({device_description, c.factor, c.keyword, c.record});
  const auto outcomes = assess_batch(queries, gateway, {cfg.models.filter, cfg.temperature});
  std::vector<RelevanceVerdict> to_generate;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& c = report.cves[i];
    const auto& o = outcomes[i];
    if (o.undecided()) {
      c.relevance = RelevanceStatus::Undecided;
      c.error = o.error;
      continue;
    }
    c.relevance = o.verdict->relevant ? RelevanceStatus::Relevant : RelevanceStatus::NotRelevant;
    c.raw_token = o.verdict->raw_token;
    c.model_id = o.verdict->model_id;
    c.prompt_hash = o.verdict->prompt_hash;
    if (!o.verdict->relevant) continue;
    if (cfg.generation_scope == GenerationScope::Verified && !c.analyst_verified.value_or(false)) continue;
    to_generate.push_back(*o.verdict);
  }
  timer.lap("relevance_filter");

  // 5. scenario generation
  report.scenarios = detail::parallel_map(to_generate, cfg.concurrency, [&](const RelevanceVerdict& v) {
    ScenarioResult res;
    res.metadata = {report.device_name, v.query.factor, v.query.keyword, v.query.cve.cve_id,
                    profile.ml.ml_attack_name, "", cfg.models.generator};
    res.metadata.prompt_hash =
        prompt_hash(render_generation_prompt(profile.structure, profile.ml, v.query.factor, v.query.keyword, v.query.cve));
    try {
      res.scenario = generate(profile.structure, profile.ml, v, gateway, {cfg.models.generator, cfg.temperature});
      res.status = GenerationStatus::Generated;
    } catch (const BudgetExceededError&) {
      throw;
    } catch (const AuthError&) {
      throw;
    } catch (const std::exception& e) {
      res.status = GenerationStatus::Failed;
      res.error = e.what();
    }
    return res;
  });
  timer.lap("generation");

  // 6. judging
  std::vector<std::size_t> generated;
  for (std::size_t i = 0; i < report.scenarios.size(); ++i) {
    if (report.scenarios[i].scenario) generated.push_back(i);
  }
  const auto judgements = detail::parallel_map(generated, cfg.concurrency, [&](std::size_t i) {
    return judge_one(report, *report.scenarios[i].scenario, cfg, gateway);
  });
  for (std::size_t k = 0; k < generated.size(); ++k) report.scenarios[generated[k]].judgement = judgements[k];
  timer.lap("judging");

  // 7. metrics
  report.metrics = compute_metrics(report);
  timer.lap("metrics");
  report.run["total_ms"] = timer.total_ms();
  report.run["llm_calls"] = gateway.calls_made();
  report.run["cve_network_calls"] = services.cve->network_calls();
  return report;
}

RunReport run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const DeviceProfile profile = load_device_profile(cfg.device_profile);
  PipelineServices services = make_services(cfg);
  const fs::path audit = cfg.audit_log.value_or(cfg.output_dir / (report_basename(profile.structure.device_name) +
                                                                  ".audit.ndjson"));
  services.gateway->set_audit_log(std::make_shared<AuditLog>(audit));
  RunReport report = run_pipeline(cfg, profile, services);
  report.run["audit_log"] = audit.string();
  report.run["output_dir"] = cfg.output_dir.string();
  write_report(report, cfg.output_dir);
  return report;
}

void rejudge(RunReport& report, const RunConfig& cfg, LlmGateway& gateway) {
  std::vector<std::size_t> generated;
  for (std::size_t i = 0; i < report.scenarios.size(); ++i) {
    if (report.scenarios[i].scenario) generated.push_back(i);
  }
  const auto judgements = detail::parallel_map(generated, cfg.concurrency, [&](std::size_t i) {
    return judge_one(report, *report.scenarios[i].scenario, cfg, gateway);
  });
  for (std::size_t k = 0; k < generated.size(); ++k) report.scenarios[generated[k]].judgement = judgements[k];
  report.metrics = compute_metrics(report);
}

std::string report_basename(const std::string& device_name) { return util::slugify(device_name); }

std::pair<fs::path, fs::path> write_report(const RunReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  const auto base = report_basename(report.device_name);
  const fs::path json_path = dir / (base + ".report.json");
  const fs::path md_path = dir / (base + ".report.md");
  util::write_file_atomic(json_path.string(), render_report(report, ReportFormat::Json));
  util::write_file_atomic(md_path.string(), render_report(report, ReportFormat::Markdown));
  return {json_path, md_path};
}

}  // namespace stpasec
