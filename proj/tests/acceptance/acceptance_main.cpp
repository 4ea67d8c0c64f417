// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "stpasec/judge.hpp"
#include "stpasec/metrics.hpp"
#include "stpasec/pipeline.hpp"
#include "stpasec/vuln_filter.hpp"
#include "suite_runner.hpp"

namespace {

using namespace stpasec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Collects failed expectations for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  template <class A, class B>
  void equal(const A& a, const B& b, const std::string& what) {
    if (!(a == b)) {
      std::ostringstream os;
      os << what << ": got " << a << ", want " << b;
      failures_.push_back(os.str());
    }
  }
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  std::vector<std::string> failures_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Reference counts for the five-device suite: per-factor technology counts,
// relevant CVEs, analyst-verified CVEs and per-device ASG accuracy.
struct DeviceReference {
  std::string slug;
  std::map<std::string, int> tech_counts;
  long long auto_cve;
  long long verified_cve;
  std::string asg_accuracy;
};

const std::vector<DeviceReference> kReference = {
    {"dnav", {{"CP", 2}, {"ENCR", 1}, {"OS", 2}, {"EXT", 5}}, 9, 4, "100.0"},
    {"abmd", {{"OS", 1}, {"EXT", 1}}, 8, 6, "100.0"},
    {"idx", {{"CP", 1}, {"HW", 1}, {"OS", 3}, {"EXT", 6}}, 22, 17, "76.5"},
    {"kidscore", {{"EXT", 2}}, 1, 1, "100.0"},
    {"oxehealth", {{"CP", 1}, {"EXT", 4}}, 17, 8, "100.0"},
};

// --- 1. technology extraction --------------------------------------------------

void technology_extraction(Check& c) {
  const auto t0 = Clock::now();
  const auto configs = testing::suite_configs(testing::scratch_dir("acc-tech"));
  int total = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& cfg = configs[i];
    const auto& ref = kReference.at(i);
    const auto profile = load_device_profile(cfg.device_profile);
    auto services = make_services(cfg);
    const FactorSet all(kAllFactors.begin(), kAllFactors.end());
    std::vector<std::vector<TechnologyMention>> lists;
    for (const auto& ex : services.extractors) {
      lists.push_back(exact_match_filter(extract(profile.corpus, all, *ex), profile.corpus));
    }
    const auto techs = merge_and_dedup(lists, profile.corpus.device_name);
    std::map<std::string, int> counts;
    for (const auto& [f, n] : techs.counts()) counts[std::string(short_code(f))] = n;
    c.expect(counts == ref.tech_counts, ref.slug + ": per-factor technology counts differ");
    total += static_cast<int>(techs.entries.size());

    const auto ev = tech_precision_recall(techs, *profile.annotations.technologies);
    c.expect(ev.precision && ev.precision->numerator == ev.precision->denominator, ref.slug + ": precision below 1.0");
    c.expect(ev.recall && ev.recall->numerator == ev.recall->denominator, ref.slug + ": recall below 1.0");
  }
  c.equal(total, 30, "technology entries");
  c.expect(seconds_since(t0) < 2.0, "extraction took " + std::to_string(seconds_since(t0)) + " s");
}

// --- 2. exact-match filter properties ----------------------------------------------

void filter_properties(Check& c) {
  const auto t0 = Clock::now();
  const std::vector<std::string> keywords = {"Wi-Fi", "iOS", "Windows Server 2019", "AES-256", "Apache Tomcat",
                                             "Topcon NW400", "DICOM", "Microsoft SQL Server"};
  const std::vector<std::string> filler = {"the", "device", "biosensor", "uploads", "data", "over", "a", "link",
                                           "and", "server", "WiFi", "Windows", "SQL", "record"};
  std::mt19937 rng(424242);
  int cases = 0;
  for (; cases < 1200; ++cases) {
    const auto& kw = keywords[rng() % keywords.size()];
    std::vector<std::string> words;
    const int n = 4 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) words.push_back(filler[rng() % filler.size()]);

    auto render = [&](std::size_t at, std::size_t* offset) {
      std::string text;
      for (std::size_t i = 0; i <= words.size(); ++i) {
        if (i == at) {
          *offset = text.size();
          text += kw + " ";
        }
        if (i < words.size()) text += words[i] + (rng() % 6 == 0 ? ".\n" : " ");
      }
      return text;
    };
    const std::size_t first_at = rng() % (words.size() + 1);
    const std::size_t second_at = rng() % (words.size() + 1);
    std::size_t off1 = 0, off2 = 0;
    const DocumentCorpus original{"dev", {{"doc", render(first_at, &off1)}}};
    const DocumentCorpus relocated{"dev", {{"doc", render(second_at, &off2)}}};

    const bool lower = rng() % 2 == 0;
    const TechnologyMention m{lower ? util::to_lower(kw) : kw, kAllFactors[rng() % 7], "doc", std::nullopt, "llm"};
    std::string glued = kw;
    glued.erase(std::remove(glued.begin(), glued.end(), '-'), glued.end());
    glued += "x";
    const TechnologyMention fake{glued, m.factor, "doc", std::nullopt, "llm"};

    const auto kept1 = exact_match_filter({m, fake}, original);
    const auto kept2 = exact_match_filter({m, fake}, relocated);
    // Relocation: the true mention survives wherever it is written, with a
    // span at its first occurrence; the fabricated one never survives.
    const bool ok = kept1.size() == 1 && kept2.size() == 1 && kept1[0].span && kept2[0].span &&
                    kept1[0].span->start == off1 && kept2[0].span->start == off2 &&
                    kept1[0].span->end - kept1[0].span->start == kw.size() &&
                    exact_match_filter(kept1, original) == kept1 && exact_match_filter(kept2, relocated) == kept2;
    if (!ok) {
      c.expect(false, "case " + std::to_string(cases) + " failed for '" + kw + "'");
      break;
    }
  }
  c.expect(cases >= 1000, "fewer than 1000 cases ran");
  c.expect(seconds_since(t0) < 5.0, "property suite took " + std::to_string(seconds_since(t0)) + " s");
}

// --- 3. CVE top-N and cache ----------------------------------------------------------

void cve_top_n(Check& c) {
  auto source = std::make_shared<FixtureCveSource>(testing::suite_dir() / "cves");
  auto all = source->search("Linux", 100);
  c.equal(all.size(), std::size_t{25}, "Linux fixture size");

  // Naive reference: published descending, then id descending by (year, number).
  auto naive = all;
  auto key = [](const CveRecord& r) {
    const auto dash = r.cve_id.find('-', 4);
    return std::make_tuple(*parse_iso8601(r.published), std::stoll(r.cve_id.substr(4, dash - 4)),
                           std::stoll(r.cve_id.substr(dash + 1)));
  };
  for (std::size_t i = 0; i < naive.size(); ++i) {
    for (std::size_t j = i + 1; j < naive.size(); ++j) {
      if (key(naive[j]) > key(naive[i])) std::swap(naive[i], naive[j]);
    }
  }
  naive.resize(10);

  const auto cache = testing::scratch_dir("acc-cache");
  CveClient client(source, {.cache_dir = cache, .requests_per_second = 1e9});
  const auto top = client.fetch_recent({"Linux", 10});
  c.expect(top == naive, "top-10 differs from the naive sort");

  const long long before = source->searches();
  c.expect(client.fetch_recent({"Linux", 10}) == top, "memory cache returned different records");
  CveClient fresh(source, {.cache_dir = cache, .requests_per_second = 1e9});
  c.expect(fresh.fetch_recent({"linux", 10}) == top, "disk cache returned different records");
  c.equal(source->searches() - before, 0LL, "fetch calls on cache hits");
  c.equal(fresh.network_calls(), 0LL, "network calls on disk cache hit");
}

// --- 4. relevance prompt and token parser ----------------------------------------------

void relevance_prompt(Check& c) {
  const auto dir = testing::suite_dir() / "devices" / "idx";
  const auto s = load_control_structure(dir / "control_structure.yaml");
  FixtureCveSource src(testing::suite_dir() / "cves");
  std::optional<CveRecord> rec;
  for (const auto& r : src.search("Sante DICOM Viewer Pro", 10)) {
    if (r.cve_id == "CVE-2025-5307") rec = r;
  }
  c.expect(rec.has_value(), "CVE-2025-5307 missing from fixtures");
  if (!rec) return;
  const RelevanceQuery q{s.device_name + ": " + s.system_description, TechnologyFactor::ExternalLibraryAndDataSource,
                         "Sante DICOM Viewer Pro", *rec};
  c.expect(render_filter_prompt(q) == testing::read_fixture("golden/relevance_prompt_idx_cve-2025-5307.txt"),
           "rendered prompt differs from the golden file");
  for (const char* ok : {"YES", "NO", "yes.", "  NO "}) c.expect(parse_relevance_token(ok).has_value(), std::string("rejected '") + ok + "'");
  for (const char* bad : {"YES and NO", "Probably yes", ""}) c.expect(!parse_relevance_token(bad), std::string("accepted '") + bad + "'");
}

// --- 5. scenario parsing ----------------------------------------------------------------

void scenario_parsing(Check& c) {
  const ScenarioMetadata meta{"IDx-DR v2.3", TechnologyFactor::ExternalLibraryAndDataSource, "Sante DICOM Viewer Pro",
                              "CVE-2025-5307", "Adversarial exposure attack", "h", "gpt-4o"};
  const auto example = testing::read_fixture("golden/worked_example_idx_dr.txt");
  const auto parsed = parse_scenario(example, meta);
  c.equal(parsed.stages.size(), std::size_t{5}, "stages in the worked example");

  std::vector<std::string> parts;
  for (std::size_t start = 0;;) {
    const auto end = example.find("\n\n", start);
    parts.push_back(example.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 2;
  }
  auto join = [](const std::vector<std::string>& p) {
    std::string out;
    for (const auto& s : p) out += (out.empty() ? "" : "\n\n") + s;
    return out;
  };
  auto kind_of = [&](const std::string& text) -> std::string {
    try {
      parse_scenario(text, meta);
      return "none";
    } catch (const ScenarioParseError& e) {
      switch (e.kind()) {
        case ScenarioParseError::Kind::Missing: return "Missing";
        case ScenarioParseError::Kind::OutOfOrder: return "OutOfOrder";
        case ScenarioParseError::Kind::Duplicated: return "Duplicated";
        case ScenarioParseError::Kind::EmptyNarrative: return "EmptyNarrative";
      }
    } catch (const CodeContentError&) {
      return "CodeContent";
    }
    return "other";
  };
  auto four = parts;
  four.pop_back();
  c.equal(kind_of(join(four)), std::string("Missing"), "4-stage mutant");
  auto swapped = parts;
  std::swap(swapped[1], swapped[2]);
  c.equal(kind_of(join(swapped)), std::string("OutOfOrder"), "out-of-order mutant");
  auto code = parts;
  code[2] += "\n```\nmsfconsole -x 'use exploit/windows/fileformat'\n```";
  c.equal(kind_of(join(code)), std::string("CodeContent"), "code-block mutant");

  std::mt19937 rng(99);
  const std::vector<std::string> words = {"adversary", "spoofs", "the", "glucose", "reading", "via", "Bluetooth",
                                          "and", "model", "output", "changes,", "(see", "CVE)", "patient's"};
  int round_trips = 0;
  for (int i = 0; i < 100; ++i) {
    AttackScenario s;
    s.device_name = "D" + std::to_string(i);
    s.factor = kAllFactors[rng() % 7];
    s.keyword = words[rng() % words.size()];
    s.cve_id = "CVE-2025-" + std::to_string(1000 + i);
    s.ml_attack_name = "attack";
    s.prompt_hash = "h";
    s.model_id = "m";
    for (auto st : kStageOrder) {
      std::string text;
      const int n = 1 + static_cast<int>(rng() % 20);
      for (int w = 0; w < n; ++w) text += (w ? (rng() % 9 == 0 ? "\n" : " ") : "") + words[rng() % words.size()];
      s.stages.push_back({st, text});
    }
    const ScenarioMetadata m{s.device_name, s.factor, s.keyword, s.cve_id, s.ml_attack_name, s.prompt_hash, s.model_id};
    if (parse_scenario(serialize_stages(s), m) == s) ++round_trips;
  }
  c.equal(round_trips, 100, "serialize/parse round trips");
}

// --- 6. judge truth table ---------------------------------------------------------------

void judge_truth_table(Check& c) {
  auto bits = [](unsigned v) {
    std::array<bool, 5> out{};
    for (int i = 0; i < 5; ++i) out[i] = (v >> i) & 1u;
    return out;
  };
  auto accepted = [&](unsigned mask) {
    return combine(make_verdict("s", "o3", bits(mask & 31u)), make_verdict("s", "gemini-2.5-pro", bits(mask >> 5)))
        .accepted;
  };
  for (unsigned mask = 0; mask < 1024; ++mask) {
    const bool a_all = (mask & 31u) == 31u, b_all = (mask >> 5) == 31u;
    const bool got = accepted(mask);
    c.expect(got == (a_all && b_all), "mask " + std::to_string(mask) + " disagrees with the conjunction");
    const bool swapped = combine(make_verdict("s", "gemini-2.5-pro", bits(mask >> 5)),
                                 make_verdict("s", "o3", bits(mask & 31u)))
                             .accepted;
    c.expect(swapped == got, "mask " + std::to_string(mask) + " is not symmetric");
    for (int bit = 0; bit < 10; ++bit) {
      c.expect(!got || accepted(mask | (1u << bit)), "mask " + std::to_string(mask) + " is not monotone");
    }
  }
}

// --- 7. metrics -------------------------------------------------------------------------

void metrics(Check& c) {
  c.equal(precision(36, 57).percent_string(), std::string("63.2%"), "precision(36, 57)");
  const std::vector<double> devices{100.0, 100.0, 76.5, 100.0, 100.0};
  c.equal(format_one_decimal(asg_average(devices)), std::string("95.3"), "asg_average");
  const auto e = effort_estimate({54, 22});
  c.equal(e.manual_minutes, 328LL, "manual minutes");
  c.equal(e.automated_seconds, 534LL, "automated seconds");
  c.expect(std::abs(e.manual_minutes / 60.0 - 5.5) <= 0.05, "manual effort is not 5.5 h within 0.05 h");
}

// --- 8. end-to-end mock run --------------------------------------------------------------

void end_to_end(Check& c) {
  const auto expected = json::parse(testing::read_fixture("suite/expected.json"));
  const auto base = testing::scratch_dir("acc-e2e");

  auto run_all = [&](const fs::path& out) {
    std::vector<RunReport> reports;
    for (const auto& cfg : testing::suite_configs(out)) {
      const auto r = run_pipeline(cfg);
      reports.push_back(r);
    }
    return reports;
  };

  const auto t0 = Clock::now();
  const auto first = run_all(base / "first");
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 10.0, "end-to-end run took " + std::to_string(elapsed) + " s");

  long long retrieved = 0, relevant = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    const auto& r = first[i];
    const auto& ref = kReference.at(i);
    retrieved += r.metrics.row.retrieved_cve;
    relevant += r.metrics.row.auto_cve;
    c.equal(r.metrics.row.auto_cve, ref.auto_cve, ref.slug + " AutoCVE");
    c.equal(r.metrics.row.verified_cve, ref.verified_cve, ref.slug + " VerifiedCVE");
    const auto acc = r.metrics.row.asg_accuracy();
    c.equal(acc ? format_one_decimal(*acc) : std::string("n/a"), ref.asg_accuracy, ref.slug + " ASG accuracy");

    std::map<std::string, bool> scripted;
    for (const auto& s : expected["devices"][i]["scenarios"]) scripted[s["id"]] = s["accepted"];
    std::map<std::string, bool> got;
    for (const auto& s : r.scenarios) {
      got[s.id()] = s.judgement && s.judgement->status == JudgementStatus::Accepted;
    }
    c.expect(got == scripted, ref.slug + ": judge results differ from the scripted outcomes");

    const fs::path json_path = base / "first" / (report_basename(r.device_name) + ".report.json");
    const auto problems = validate_report(json::parse(util::read_file(json_path.string())));
    c.expect(problems.empty(), ref.slug + ": " + (problems.empty() ? "" : problems.front()));
  }
  c.equal(retrieved, 165LL, "retrieved CVEs");
  c.equal(relevant, 57LL, "relevant CVEs");

  const auto second = run_all(base / "second");
  for (std::size_t i = 0; i < first.size(); ++i) {
    const auto name = report_basename(first[i].device_name);
    auto strip = [&](const fs::path& dir) {
      auto j = json::parse(util::read_file((dir / (name + ".report.json")).string()));
      j.erase("run");
      return j.dump(2);
    };
    c.expect(strip(base / "first") == strip(base / "second"), name + ": repeat run differs outside the run block");
    c.expect(util::read_file((base / "first" / (name + ".report.md")).string()) ==
                 util::read_file((base / "second" / (name + ".report.md")).string()),
             name + ": markdown reports differ");
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"1 technology extraction matches reference counts", technology_extraction},
      {"2 exact-match filter properties (>=1000 cases)", filter_properties},
      {"3 CVE top-10 ordering and cache hits", cve_top_n},
      {"4 relevance prompt golden and token parser", relevance_prompt},
      {"5 scenario parsing, mutants and round trip", scenario_parsing},
      {"6 judge truth table", judge_truth_table},
      {"7 metrics", metrics},
      {"8 end-to-end mock run", end_to_end},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check check;
    try {
      fn(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const bool ok = check.failures().empty();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(check.failures().size(), 5); ++i) {
      std::cout << "      " << check.failures()[i] << "\n";
    }
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
