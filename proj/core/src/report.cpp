#include "stpasec/report.hpp"

#include <map>
#include <sstream>

#include "stpasec/util.hpp"

namespace stpasec {

std::string_view to_string(RelevanceStatus s) {
  switch (s) {
    case RelevanceStatus::Relevant: return "relevant";
    case RelevanceStatus::NotRelevant: return "not_relevant";
    case RelevanceStatus::Undecided: return "undecided";
  }
  return "?";
}

namespace {

RelevanceStatus parse_relevance_status(const std::string& s) {
  for (auto st : {RelevanceStatus::Relevant, RelevanceStatus::NotRelevant, RelevanceStatus::Undecided}) {
    if (s == to_string(st)) return st;
  }
  throw ConfigError("report: unknown relevance status '" + s + "'");
}

std::string_view to_string(GenerationStatus s) { return s == GenerationStatus::Generated ? "generated" : "failed"; }

GenerationStatus parse_generation_status(const std::string& s) {
  if (s == "generated") return GenerationStatus::Generated;
  if (s == "failed") return GenerationStatus::Failed;
  throw ConfigError("report: unknown generation status '" + s + "'");
}

TechnologyFactor factor_field(FieldReader& r, const std::string& key) {
  const auto text = r.required_string(key);
  const auto f = parse_factor(text);
  if (!f) throw ConfigError(r.context() + ": unknown factor '" + text + "'");
  return *f;
}

json tech_key_json(const TechKey& k) { return {{"factor", display_name(k.second)}, {"keyword", k.first}}; }

json ratio_json(const std::optional<Ratio>& r) {
  if (!r) return nullptr;
  return {{"numerator", r->numerator}, {"denominator", r->denominator}, {"percent", r->percent_string()}};
}

std::string scenario_id_of(const std::string& device, TechnologyFactor f, const std::string& keyword,
                           const std::string& cve) {
  return device + "/" + std::string(short_code(f)) + "/" + keyword + "/" + cve;
}

}  // namespace

// --- annotations ----------------------------------------------------------

DeviceAnnotations DeviceAnnotations::from_json(const json& doc) {
  FieldReader r(doc, "annotations");
  DeviceAnnotations a;
  if (const json* techs = r.optional("technologies")) {
    std::set<TechKey> keys;
    for (std::size_t i = 0; i < techs->size(); ++i) {
      FieldReader tr((*techs)[i], "annotations: technologies[" + std::to_string(i) + "]");
      const auto f = factor_field(tr, "factor");
      const auto kw = tr.required_string("keyword");
      tr.finish();
      keys.emplace(normalize_keyword(kw), f);
    }
    a.technologies = std::move(keys);
  }
  if (const json* cves = r.optional("verified_cves")) {
    std::set<std::string> ids;
    for (const auto& c : *cves) {
      if (!c.is_string() || !is_canonical_cve_id(c.get<std::string>())) {
        throw ConfigError("annotations: verified_cves entries must be CVE ids, got " + c.dump());
      }
      ids.insert(c.get<std::string>());
    }
    a.verified_cves = std::move(ids);
  }
  r.finish();
  return a;
}

json DeviceAnnotations::to_json() const {
  json j = json::object();
  if (technologies) {
    json list = json::array();
    for (const auto& k : *technologies) list.push_back(tech_key_json(k));
    j["technologies"] = list;
  }
  if (verified_cves) j["verified_cves"] = *verified_cves;
  return j;
}

std::string ScenarioResult::id() const {
  return scenario_id_of(metadata.device_name, metadata.factor, metadata.keyword, metadata.cve_id);
}

long long RunReport::item_errors() const {
  long long n = static_cast<long long>(extractor_errors.size() + fetch_failures.size());
  for (const auto& c : cves) n += c.relevance == RelevanceStatus::Undecided ? 1 : 0;
  for (const auto& s : scenarios) {
    if (s.status == GenerationStatus::Failed) ++n;
    if (s.judgement && s.judgement->status == JudgementStatus::Unjudgeable) ++n;
  }
  return n;
}

// --- metrics ----------------------------------------------------------------

ReportMetrics compute_metrics(const RunReport& report) {
  ReportMetrics m;
  CountRow& row = m.row;
  row.device = report.device_name;
  row.retrieved_cve = static_cast<long long>(report.cves.size());
  for (const auto& c : report.cves) {
    if (c.relevance != RelevanceStatus::Relevant) continue;
    ++row.auto_cve;
    if (c.analyst_verified.value_or(false)) ++row.verified_cve;
  }
  for (const auto& s : report.scenarios) {
    if (!s.judgement) continue;
    switch (s.judgement->status) {
      case JudgementStatus::Accepted:
        ++row.scenarios_total;
        ++row.scenarios_accepted;
        break;
      case JudgementStatus::Rejected: ++row.scenarios_total; break;
      case JudgementStatus::Unjudgeable: ++row.scenarios_unjudgeable; break;
    }
  }
  row.tech_counts = report.technologies.counts();
  m.effort_inputs = {row.retrieved_cve, row.auto_cve};
  m.effort = effort_estimate(m.effort_inputs);
  if (report.annotations.technologies) {
    m.tech = tech_precision_recall(report.technologies, *report.annotations.technologies);
  }
  return m;
}

namespace {

json metrics_json(const ReportMetrics& m, bool has_verified_annotations) {
  const auto& r = m.row;
  json counts = json::object();
  long long techs = 0;
  for (auto f : kAllFactors) {
    auto it = r.tech_counts.find(f);
    const int n = it == r.tech_counts.end() ? 0 : it->second;
    counts[std::string(short_code(f))] = n;
    techs += n;
  }
  json j{{"retrieved_cve", r.retrieved_cve},
         {"auto_cve", r.auto_cve},
         {"verified_cve", has_verified_annotations ? json(r.verified_cve) : json(nullptr)},
         {"technology_counts", counts},
         {"technologies_total", techs},
         {"scenarios_judged", r.scenarios_total},
         {"scenarios_accepted", r.scenarios_accepted},
         {"scenarios_unjudgeable", r.scenarios_unjudgeable}};
  const auto acc = r.asg_accuracy();
  j["asg_accuracy_percent"] = acc ? json(format_one_decimal(*acc)) : json(nullptr);
  j["filter_precision"] =
      has_verified_annotations && r.auto_cve > 0 ? ratio_json(precision(r.verified_cve, r.auto_cve)) : json(nullptr);
  j["effort"] = {{"cve_records", m.effort_inputs.x},
                 {"relevant_records", m.effort_inputs.y},
                 {"manual_minutes", m.effort.manual_minutes},
                 {"automated_seconds", m.effort.automated_seconds}};
  if (m.tech) {
    json fp = json::array(), fn = json::array();
    for (const auto& k : m.tech->false_positives) fp.push_back(tech_key_json(k));
    for (const auto& k : m.tech->false_negatives) fn.push_back(tech_key_json(k));
    j["technology_evaluation"] = {{"precision", ratio_json(m.tech->precision)},
                                  {"recall", ratio_json(m.tech->recall)},
                                  {"false_positives", fp},
                                  {"false_negatives", fn}};
  } else {
    j["technology_evaluation"] = nullptr;
  }
  return j;
}

json metadata_json(const ScenarioMetadata& m) {
  return {{"device_name", m.device_name}, {"factor", display_name(m.factor)}, {"keyword", m.keyword},
          {"cve_id", m.cve_id},           {"ml_attack_name", m.ml_attack_name}, {"prompt_hash", m.prompt_hash},
          {"model_id", m.model_id}};
}

ScenarioMetadata metadata_from_json(const json& j) {
  FieldReader r(j, "scenario metadata");
  ScenarioMetadata m;
  m.device_name = r.required_string("device_name");
  m.factor = factor_field(r, "factor");
  m.keyword = r.required_string("keyword");
  m.cve_id = r.required_string("cve_id");
  m.ml_attack_name = r.required_string("ml_attack_name");
  m.prompt_hash = r.string_or("prompt_hash", "");
  m.model_id = r.string_or("model_id", "");
  r.finish();
  return m;
}

}  // namespace

// --- JSON -------------------------------------------------------------------

json to_json(const RunReport& r) {
  json points = json::array();
  for (const auto& p : r.injection_points) points.push_back({{"component", p.component}, {"path_to_ml", p.path_to_ml}});
  json filtered = json::array();
  for (const auto& f : r.filtered_mentions) filtered.push_back({{"mention", to_json(f.mention)}, {"reason", f.reason}});
  json cves = json::array();
  for (const auto& c : r.cves) {
    json e{{"factor", display_name(c.factor)},
           {"keyword", c.keyword},
           {"record", to_json(c.record)},
           {"relevance", to_string(c.relevance)},
           {"raw_token", c.raw_token},
           {"model_id", c.model_id},
           {"prompt_hash", c.prompt_hash},
           {"error", c.error}};
    e["analyst_verified"] = c.analyst_verified ? json(*c.analyst_verified) : json(nullptr);
    cves.push_back(e);
  }
  json failures = json::array();
  for (const auto& f : r.fetch_failures) {
    failures.push_back({{"factor", display_name(f.factor)}, {"keyword", f.keyword}, {"error", f.error}});
  }
  json scenarios = json::array();
  for (const auto& s : r.scenarios) {
    json e{{"id", s.id()}, {"metadata", metadata_json(s.metadata)}, {"status", to_string(s.status)}, {"error", s.error}};
    e["scenario"] = s.scenario ? to_json(*s.scenario) : json(nullptr);
    e["judgement"] = s.judgement ? to_json(*s.judgement) : json(nullptr);
    scenarios.push_back(e);
  }
  return {{"tool_version", r.tool_version},
          {"device_name", r.device_name},
          {"config", r.config},
          {"control_structure",
           {{"system_description", r.system_description}, {"data_flow", r.data_flow}, {"injection_points", points}}},
          {"technologies", to_json(r.technologies)},
          {"filtered_mentions", filtered},
          {"extractor_errors", r.extractor_errors},
          {"cves", cves},
          {"fetch_failures", failures},
          {"scenarios", scenarios},
          {"annotations", r.annotations.to_json()},
          {"metrics", metrics_json(r.metrics, r.annotations.verified_cves.has_value())},
          {"run", r.run}};
}

RunReport run_report_from_json(const json& j) {
  FieldReader top(j, "report");
  RunReport r;
  r.tool_version = top.required_string("tool_version");
  r.device_name = top.required_string("device_name");
  r.config = top.required("config");
  {
    FieldReader cs(top.required("control_structure"), "report: control_structure");
    r.system_description = cs.required_string("system_description");
    r.data_flow = cs.required_string("data_flow");
    for (const auto& p : cs.required("injection_points")) {
      r.injection_points.push_back(
          {p.at("component").get<std::string>(), p.at("path_to_ml").get<std::vector<std::string>>()});
    }
    cs.finish();
  }
  r.technologies = technology_list_from_json(top.required("technologies"));
  for (const auto& f : top.required("filtered_mentions")) {
    r.filtered_mentions.push_back({mention_from_json(f.at("mention")), f.at("reason").get<std::string>()});
  }
  r.extractor_errors = top.required("extractor_errors").get<std::vector<std::string>>();
  for (const auto& c : top.required("cves")) {
    FieldReader cr(c, "report: cve finding");
    CveFinding f;
    f.factor = factor_field(cr, "factor");
    f.keyword = cr.required_string("keyword");
    f.record = cve_record_from_json(cr.required("record"));
    f.relevance = parse_relevance_status(cr.required_string("relevance"));
    f.raw_token = cr.string_or("raw_token", "");
    f.model_id = cr.string_or("model_id", "");
    f.prompt_hash = cr.string_or("prompt_hash", "");
    f.error = cr.string_or("error", "");
    if (const json* v = cr.optional("analyst_verified"); v && !v->is_null()) f.analyst_verified = v->get<bool>();
    cr.finish();
    r.cves.push_back(std::move(f));
  }
  for (const auto& c : top.required("fetch_failures")) {
    FieldReader fr(c, "report: fetch failure");
    FetchFailure f;
    f.factor = factor_field(fr, "factor");
    f.keyword = fr.required_string("keyword");
    f.error = fr.string_or("error", "");
    fr.finish();
    r.fetch_failures.push_back(std::move(f));
  }
  for (const auto& s : top.required("scenarios")) {
    FieldReader sr(s, "report: scenario");
    ScenarioResult res;
    sr.optional("id");
    res.metadata = metadata_from_json(sr.required("metadata"));
    res.status = parse_generation_status(sr.required_string("status"));
    res.error = sr.string_or("error", "");
    if (const json* sc = sr.optional("scenario"); sc && !sc->is_null()) {
      res.scenario = attack_scenario_from_json(*sc);
    }
    if (const json* jg = sr.optional("judgement"); jg && !jg->is_null()) res.judgement = judgement_from_json(*jg);
    sr.finish();
    r.scenarios.push_back(std::move(res));
  }
  r.annotations = DeviceAnnotations::from_json(top.required("annotations"));
  top.required("metrics");
  r.run = top.required("run");
  top.finish();
  r.metrics = compute_metrics(r);
  return r;
}

// --- validation -------------------------------------------------------------

std::vector<std::string> validate_report(const json& report) {
  std::vector<std::string> problems;
  RunReport r;
  try {
    r = run_report_from_json(report);
  } catch (const std::exception& e) {
    return {std::string("report does not parse: ") + e.what()};
  }

  std::set<std::pair<TechnologyFactor, std::string>> techs;
  for (const auto& e : r.technologies.entries) techs.emplace(e.factor, e.keyword);

  std::map<std::string, const CveFinding*> findings;
  for (const auto& c : r.cves) {
    const auto key = scenario_id_of(r.device_name, c.factor, c.keyword, c.record.cve_id);
    if (!techs.count({c.factor, c.keyword})) {
      problems.push_back("CVE finding " + c.record.cve_id + " references unknown technology '" + c.keyword + "'");
    }
    for (const auto& v : record_violations(c.record)) problems.push_back(c.record.cve_id + ": " + v);
    if (!findings.emplace(key, &c).second) problems.push_back("duplicate CVE finding " + key);
    if (c.relevance == RelevanceStatus::Undecided && c.error.empty()) {
      problems.push_back("undecided CVE finding " + key + " carries no error");
    }
    if (c.relevance != RelevanceStatus::Undecided && c.raw_token != "YES" && c.raw_token != "NO") {
      problems.push_back("CVE finding " + key + " has no verdict token");
    }
    if ((c.relevance == RelevanceStatus::Relevant) != (c.raw_token == "YES")) {
      problems.push_back("CVE finding " + key + " relevance disagrees with its verdict token");
    }
  }
  for (const auto& f : r.fetch_failures) {
    if (!techs.count({f.factor, f.keyword})) {
      problems.push_back("fetch failure references unknown technology '" + f.keyword + "'");
    }
  }

  std::set<std::string> scenario_ids;
  for (const auto& s : r.scenarios) {
    const auto id = s.id();
    if (!scenario_ids.insert(id).second) problems.push_back("duplicate scenario " + id);
    if (s.metadata.device_name != r.device_name) problems.push_back("scenario " + id + " names another device");
    auto it = findings.find(id);
    if (it == findings.end()) {
      problems.push_back("scenario " + id + " references no CVE finding");
    } else if (it->second->relevance != RelevanceStatus::Relevant) {
      problems.push_back("scenario " + id + " references a CVE that was not judged relevant");
    }
    if (s.status == GenerationStatus::Generated) {
      if (!s.scenario) {
        problems.push_back("scenario " + id + " is marked generated but has no content");
      } else if (s.scenario->id() != id) {
        problems.push_back("scenario " + id + " content belongs to " + s.scenario->id());
      }
    } else {
      if (s.scenario) problems.push_back("failed scenario " + id + " carries content");
      if (s.error.empty()) problems.push_back("failed scenario " + id + " carries no error");
      if (s.judgement) problems.push_back("failed scenario " + id + " was judged");
    }
    if (s.judgement) {
      const auto& jg = *s.judgement;
      if (jg.scenario_id != id) problems.push_back("judgement for " + jg.scenario_id + " attached to " + id);
      const bool complete = jg.outcomes.size() == 2 && jg.outcomes[0].verdict && jg.outcomes[1].verdict;
      if (complete) {
        const bool accepted = jg.outcomes[0].verdict->overall && jg.outcomes[1].verdict->overall;
        const auto expected = accepted ? JudgementStatus::Accepted : JudgementStatus::Rejected;
        if (jg.status != expected) problems.push_back("judgement status of " + id + " disagrees with its verdicts");
        for (const auto& o : jg.outcomes) {
          if (o.verdict->scenario_id != id) problems.push_back("verdict in " + id + " names " + o.verdict->scenario_id);
        }
      } else if (jg.status != JudgementStatus::Unjudgeable) {
        problems.push_back("judgement of " + id + " lacks two verdicts but is not unjudgeable");
      }
    }
  }

  for (const auto& v : r.metrics.row.violations()) problems.push_back("metrics: " + v);
  const json recomputed = metrics_json(r.metrics, r.annotations.verified_cves.has_value());
  if (report.contains("metrics") && report["metrics"] != recomputed) {
    problems.push_back("metrics block does not match the report content");
  }
  return problems;
}

// --- rendering --------------------------------------------------------------

namespace {

std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') {
      out += "\\|";
    } else if (c == '\n' || c == '\r') {
      out += ' ';
    } else {
      out += c;
    }
  }
  return out;
}

std::string render_markdown(const RunReport& r) {
  std::ostringstream out;
  out << "# Security analysis: " << r.device_name << "\n\n";
  out << "Tool version: " << r.tool_version << "\n\n";

  out << "## Summary\n\n";
  CountTable table;
  table.rows.push_back(r.metrics.row);
  out << render_count_table_markdown(table) << "\n";
  if (r.annotations.verified_cves && r.metrics.row.auto_cve > 0) {
    out << "- Relevance filter precision: "
        << precision(r.metrics.row.verified_cve, r.metrics.row.auto_cve).percent_string() << " ("
        << r.metrics.row.verified_cve << " of " << r.metrics.row.auto_cve << " flagged CVEs verified)\n";
  }
  if (r.metrics.tech) {
    const auto& t = *r.metrics.tech;
    out << "- Technology identification: precision "
        << (t.precision ? t.precision->percent_string() : std::string("n/a")) << ", recall "
        << (t.recall ? t.recall->percent_string() : std::string("n/a")) << "\n";
  }
  out << "- Estimated manual effort: " << r.metrics.effort.manual_minutes << " min; automated: "
      << r.metrics.effort.automated_seconds << " s (" << r.metrics.effort_inputs.x << " CVE records, "
      << r.metrics.effort_inputs.y << " relevant)\n";
  out << "- Item errors: " << r.item_errors() << "\n\n";

  out << "## Control structure\n\n";
  out << r.system_description << "\n\n";
  out << "Data flow: " << r.data_flow << "\n\n";
  out << "Injection points:\n\n";
  if (r.injection_points.empty()) out << "- none\n";
  for (const auto& p : r.injection_points) {
    out << "- " << p.component << ": ";
    for (std::size_t i = 0; i < p.path_to_ml.size(); ++i) out << (i ? " → " : "") << p.path_to_ml[i];
    out << "\n";
  }
  out << "\n";

  out << "## Technologies\n\n";
  out << "| Factor | Keyword | Documents |\n|---|---|---|\n";
  for (const auto& e : r.technologies.entries) {
    std::set<std::string> docs;
    for (const auto& m : e.mentions) docs.insert(m.doc_id);
    std::string joined;
    for (const auto& d : docs) joined += (joined.empty() ? "" : ", ") + d;
    out << "| " << display_name(e.factor) << " | " << md_cell(e.keyword) << " | " << md_cell(joined) << " |\n";
  }
  out << "\n";
  if (!r.filtered_mentions.empty()) {
    out << "Filtered mentions:\n\n";
    for (const auto& f : r.filtered_mentions) {
      out << "- `" << f.mention.keyword << "` (" << f.mention.extractor << ", " << f.mention.doc_id << "): " << f.reason
          << "\n";
    }
    out << "\n";
  }

  out << "## CVE findings\n\n";
  out << "| Factor | Keyword | CVE | CNA | Published | Relevance | Verified |\n|---|---|---|---|---|---|---|\n";
  for (const auto& c : r.cves) {
    out << "| " << short_code(c.factor) << " | " << md_cell(c.keyword) << " | " << c.record.cve_id << " | "
        << md_cell(c.record.cna) << " | " << c.record.published << " | " << to_string(c.relevance) << " | "
        << (c.analyst_verified ? (*c.analyst_verified ? "yes" : "no") : "") << " |\n";
  }
  out << "\n";

  out << "## Attack scenarios\n\n";
  if (r.scenarios.empty()) out << "No scenarios.\n\n";
  for (const auto& s : r.scenarios) {
    out << "### " << s.id() << "\n\n";
    if (s.status == GenerationStatus::Failed) {
      out << "Generation failed: " << s.error << "\n\n";
      continue;
    }
    if (s.judgement) {
      out << "Judgement: " << to_string(s.judgement->status);
      for (const auto& o : s.judgement->outcomes) {
        out << "; " << o.judge_model_id << ": ";
        if (!o.verdict) {
          out << "no verdict";
          continue;
        }
        for (std::size_t i = 0; i < kStageOrder.size(); ++i) out << (o.verdict->per_step[i] ? '+' : '-');
      }
      out << "\n\n";
    }
    out << serialize_stages(*s.scenario) << "\n";
  }

  std::vector<std::string> errors = r.extractor_errors;
  for (const auto& f : r.fetch_failures) errors.push_back("CVE fetch for '" + f.keyword + "': " + f.error);
  for (const auto& c : r.cves) {
    if (c.relevance == RelevanceStatus::Undecided) errors.push_back(c.record.cve_id + " undecided: " + c.error);
  }
  for (const auto& s : r.scenarios) {
    if (s.judgement) {
      for (const auto& o : s.judgement->outcomes) {
        if (!o.verdict) errors.push_back(s.id() + " judge " + o.judge_model_id + ": " + o.error);
      }
    }
  }
  if (!errors.empty()) {
    out << "## Item errors\n\n";
    for (const auto& e : errors) out << "- " << md_cell(e) << "\n";
    out << "\n";
  }
  return out.str();
}

}  // namespace

std::string render_report(const RunReport& r, ReportFormat format) {
  if (format == ReportFormat::Json) return to_json(r).dump(2) + "\n";
  return render_markdown(r);
}

CountTable count_table(const std::vector<RunReport>& reports) {
  CountTable t;
  for (const auto& r : reports) t.rows.push_back(r.metrics.row);
  return t;
}

std::string render_summary_markdown(const std::vector<RunReport>& reports) {
  const auto table = count_table(reports);
  std::ostringstream out;
  out << "# Summary\n\n" << render_count_table_markdown(table) << "\n";
  if (table.total_auto() > 0) {
    out << "- Relevance filter precision: " << precision(table.total_verified(), table.total_auto()).percent_string()
        << " (" << table.total_verified() << " of " << table.total_auto() << ")\n";
  }
  out << "- Technologies identified: " << table.total_technologies() << "\n";
  if (auto avg = table.average_accuracy()) out << "- Average ASG accuracy: " << format_one_decimal(*avg) << "%\n";
  return out.str();
}

json summary_json(const std::vector<RunReport>& reports) {
  const auto table = count_table(reports);
  json devices = json::array();
  for (const auto& r : reports) {
    devices.push_back({{"device", r.device_name}, {"metrics", metrics_json(r.metrics, r.annotations.verified_cves.has_value())}});
  }
  json j{{"devices", devices},
         {"retrieved_cve", table.total_retrieved()},
         {"auto_cve", table.total_auto()},
         {"verified_cve", table.total_verified()},
         {"technologies_total", table.total_technologies()}};
  j["filter_precision"] =
      table.total_auto() > 0 ? ratio_json(precision(table.total_verified(), table.total_auto())) : json(nullptr);
  const auto avg = table.average_accuracy();
  j["average_asg_accuracy_percent"] = avg ? json(format_one_decimal(*avg)) : json(nullptr);
  return j;
}

}  // namespace stpasec
