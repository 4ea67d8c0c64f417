#include <httplib.h>

#include <cstdlib>

#include "stpasec/cve_client.hpp"
#include "stpasec/http_provider.hpp"
#include "stpasec/util.hpp"

namespace stpasec {

namespace {

std::string excerpt(const std::string& body) { return body.substr(0, 240); }

std::optional<Severity> severity_from_metrics(const json& metrics) {
  for (const char* key : {"cvssMetricV40", "cvssMetricV31", "cvssMetricV30"}) {
    auto it = metrics.find(key);
    if (it == metrics.end() || !it->is_array() || it->empty()) continue;
    const json& data = (*it)[0].value("cvssData", json::object());
    if (data.contains("baseSeverity") && data["baseSeverity"].is_string()) {
      return parse_severity(data["baseSeverity"].get<std::string>());
    }
  }
  auto v2 = metrics.find("cvssMetricV2");
  if (v2 != metrics.end() && v2->is_array() && !v2->empty() && (*v2)[0].contains("baseSeverity")) {
    return parse_severity((*v2)[0]["baseSeverity"].get<std::string>());
  }
  return std::nullopt;
}

}  // namespace

std::vector<CveRecord> parse_nvd_response(const std::string& body, long long* total_results) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw MalformedResponseError(std::string("NVD response is not JSON: ") + e.what(), excerpt(body));
  }
  try {
    if (total_results) *total_results = doc.at("totalResults").get<long long>();
    std::vector<CveRecord> out;
    for (const auto& v : doc.at("vulnerabilities")) {
      const json& cve = v.at("cve");
      CveRecord r;
      r.cve_id = cve.at("id").get<std::string>();
      r.cna = cve.value("sourceIdentifier", "");
      r.published = cve.at("published").get<std::string>();
      for (const auto& d : cve.value("descriptions", json::array())) {
        if (d.value("lang", "") == "en") {
          r.description = d.value("value", "");
          break;
        }
      }
      if (cve.contains("metrics")) r.severity = severity_from_metrics(cve["metrics"]);
      r.source_url = "https://nvd.nist.gov/vuln/detail/" + r.cve_id;
      out.push_back(std::move(r));
    }
    return out;
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("unexpected NVD response shape: ") + e.what(), excerpt(body));
  }
}

NvdCveSource::NvdCveSource(NvdOptions options) : options_(std::move(options)) {
  if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
  parse_endpoint(options_.endpoint);  // validates eagerly
}

json NvdCveSource::get_page(const std::string& keyword, long long start_index, int results_per_page) {
  const Endpoint ep = parse_endpoint(options_.endpoint);
  httplib::Client cli(ep.scheme + "://" + ep.host + ":" + std::to_string(ep.port));
  cli.set_connection_timeout(options_.timeout);
  cli.set_read_timeout(options_.timeout);
  httplib::Params params{{"keywordSearch", keyword},
                         {"startIndex", std::to_string(start_index)},
                         {"resultsPerPage", std::to_string(results_per_page)}};
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("apiKey", api_key_);

  auto res = cli.Get(ep.path_prefix.empty() ? "/" : ep.path_prefix, params, headers);
  if (!res) throw NetworkError("NVD request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status == 403) {
    std::chrono::seconds retry_after{6};
    if (res->has_header("Retry-After")) {
      try {
        retry_after = std::chrono::seconds(std::stoll(res->get_header_value("Retry-After")));
      } catch (const std::exception&) {
      }
    }
    throw RateLimitError("NVD rate limit (HTTP " + std::to_string(res->status) + ")", retry_after);
  }
  if (res->status >= 500) throw NetworkError("NVD server error (HTTP " + std::to_string(res->status) + ")");
  if (res->status != 200) {
    throw MalformedResponseError("NVD returned HTTP " + std::to_string(res->status), excerpt(res->body));
  }
  long long total = 0;
  auto records = parse_nvd_response(res->body, &total);
  json out = json::array();
  for (const auto& r : records) out.push_back(to_json(r));
  return {{"total", total}, {"records", out}};
}

std::vector<CveRecord> NvdCveSource::search(const std::string& keyword, int limit) {
  const json probe = get_page(keyword, 0, 1);
  const long long total = probe.at("total").get<long long>();
  if (total == 0) return {};
  const int page = std::max(options_.page_size, limit);
  const long long start = std::max(0LL, total - page);
  const json tail = get_page(keyword, start, page);
  std::vector<CveRecord> out;
  for (const auto& r : tail.at("records")) out.push_back(cve_record_from_json(r));
  return out;
}

}  // namespace stpasec
