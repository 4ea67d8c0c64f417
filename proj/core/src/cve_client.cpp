#include "stpasec/cve_client.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <regex>
#include <thread>

#include "stpasec/util.hpp"

namespace stpasec {

namespace {

constexpr std::array<std::pair<Severity, std::string_view>, 5> kSeverityNames = {{
    {Severity::None, "None"},
    {Severity::Low, "Low"},
    {Severity::Medium, "Medium"},
    {Severity::High, "High"},
    {Severity::Critical, "Critical"},
}};

// (year, sequence) of a canonical id; {-1, -1} otherwise.
std::pair<long long, long long> cve_id_key(const std::string& id) {
  static const std::regex kId("^CVE-([0-9]{4})-([0-9]{4,})$");
  std::smatch m;
  if (!std::regex_match(id, m, kId)) return {-1, -1};
  return {std::stoll(m[1].str()), std::stoll(m[2].str())};
}

std::string iso_utc(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string normalized_keyword(const std::string& k) { return util::to_lower(util::collapse_whitespace(k)); }

}  // namespace

std::string_view to_string(Severity s) {
  for (const auto& [sev, name] : kSeverityNames) {
    if (sev == s) return name;
  }
  return "None";
}

std::optional<Severity> parse_severity(std::string_view text) {
  for (const auto& [sev, name] : kSeverityNames) {
    if (util::iequals(name, util::trim(text))) return sev;
  }
  return std::nullopt;
}

bool is_canonical_cve_id(std::string_view id) { return cve_id_key(std::string(id)).first >= 0; }

std::optional<long long> parse_iso8601(std::string_view text) {
  static const std::regex kIso(
      "^([0-9]{4})-([0-9]{2})-([0-9]{2})"
      "(?:[T ]([0-9]{2}):([0-9]{2})(?::([0-9]{2})(?:\\.[0-9]+)?)?)?"
      "(Z|[+-][0-9]{2}:?[0-9]{2})?$");
  std::cmatch m;
  if (!std::regex_match(text.begin(), text.end(), m, kIso)) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{std::stoi(m[1].str())}, month{static_cast<unsigned>(std::stoi(m[2].str()))},
                           day{static_cast<unsigned>(std::stoi(m[3].str()))}};
  if (!ymd.ok()) return std::nullopt;
  const int hh = m[4].matched ? std::stoi(m[4].str()) : 0;
  const int mm = m[5].matched ? std::stoi(m[5].str()) : 0;
  const int ss = m[6].matched ? std::stoi(m[6].str()) : 0;
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  long long secs = duration_cast<seconds>(sys_days{ymd}.time_since_epoch()).count() + hh * 3600LL + mm * 60LL + ss;
  if (m[7].matched && m[7].str() != "Z") {
    const std::string off = m[7].str();
    const int sign = off[0] == '-' ? -1 : 1;
    const std::string digits = std::regex_replace(off.substr(1), std::regex(":"), "");
    const int oh = std::stoi(digits.substr(0, 2));
    const int om = std::stoi(digits.substr(2, 2));
    secs -= sign * (oh * 3600LL + om * 60LL);
  }
  return secs;
}

std::vector<std::string> record_violations(const CveRecord& r) {
  std::vector<std::string> v;
  if (!is_canonical_cve_id(r.cve_id)) v.push_back("non-canonical CVE id '" + r.cve_id + "'");
  if (!parse_iso8601(r.published)) v.push_back(r.cve_id + ": unparseable publication date '" + r.published + "'");
  if (util::trim(r.description).empty()) v.push_back(r.cve_id + ": empty description");
  return v;
}

bool more_recent(const CveRecord& a, const CveRecord& b) {
  const auto pa = parse_iso8601(a.published).value_or(std::numeric_limits<long long>::min());
  const auto pb = parse_iso8601(b.published).value_or(std::numeric_limits<long long>::min());
  if (pa != pb) return pa > pb;
  const auto ka = cve_id_key(a.cve_id);
  const auto kb = cve_id_key(b.cve_id);
  if (ka != kb) return ka > kb;
  return a.cve_id > b.cve_id;
}

json to_json(const CveRecord& r) {
  json j{{"cve_id", r.cve_id},
         {"cna", r.cna},
         {"description", r.description},
         {"published", r.published},
         {"source_url", r.source_url}};
  j["severity"] = r.severity ? json(to_string(*r.severity)) : json(nullptr);
  j["patched"] = r.patched ? json(*r.patched) : json(nullptr);
  return j;
}

CveRecord cve_record_from_json(const json& j) {
  FieldReader f(j, "CVE record");
  CveRecord r;
  r.cve_id = f.required_string("cve_id");
  r.cna = f.string_or("cna", "");
  r.description = f.string_or("description", "");
  r.published = f.required_string("published");
  if (auto sev = f.optional_string("severity")) {
    r.severity = parse_severity(*sev);
    if (!r.severity) throw ConfigError("CVE record " + r.cve_id + ": unknown severity '" + *sev + "'");
  }
  if (const json* p = f.optional("patched")) {
    if (!p->is_boolean()) throw ConfigError("CVE record " + r.cve_id + ": 'patched' must be a boolean");
    r.patched = p->get<bool>();
  }
  r.source_url = f.string_or("source_url", "");
  f.finish();
  return r;
}

void CveQuery::validate() const {
  if (util::trim(keyword).empty()) throw PreconditionError("CVE query keyword must not be empty");
  if (limit < 1) throw PreconditionError("CVE query limit must be at least 1");
}

FixtureCveSource::FixtureCveSource(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ConfigError("CVE fixture directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const json doc = load_document(path);
    FieldReader f(doc, path.string());
    const auto keyword = f.required_string("keyword");
    const json& records = f.required("records");
    f.finish();
    if (!records.is_array()) throw ConfigError(path.string() + ": 'records' must be a list");
    auto& bucket = by_keyword_[normalized_keyword(keyword)];
    for (const auto& r : records) bucket.push_back(cve_record_from_json(r));
  }
}

std::vector<CveRecord> FixtureCveSource::search(const std::string& keyword, int /*limit*/) {
  ++searches_;
  auto it = by_keyword_.find(normalized_keyword(keyword));
  if (it == by_keyword_.end()) return {};
  return it->second;
}

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : rate_(requests_per_second), burst_(std::max(burst, 1.0)), tokens_(burst_), last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0) return;
  std::unique_lock lock(mu_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

CveClient::CveClient(std::shared_ptr<CveSource> source, CveClientOptions options)
    : source_(std::move(source)),
      source_name_(source_ ? source_->name() : ""),
      options_(std::move(options)),
      limiter_(options_.requests_per_second, std::max(1.0, options_.requests_per_second)),
      clock_([] { return std::chrono::system_clock::now(); }),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (!source_) throw ConfigError("CVE client requires a source");
}

long long CveClient::network_calls() const {
  std::lock_guard lock(mu_);
  return network_calls_;
}

std::filesystem::path CveClient::cache_file(const CveQuery& q) const {
  const auto key = source_name_ + "\n" + normalized_keyword(q.keyword) + "\n" + std::to_string(q.limit);
  const auto name = util::slugify(q.keyword) + "-n" + std::to_string(q.limit) + "-" + util::sha256_hex(key).substr(0, 12) + ".json";
  return options_.cache_dir.value_or(std::filesystem::path{}) / name;
}

std::optional<std::vector<CveRecord>> CveClient::read_disk_cache(const CveQuery& q) const {
  if (!options_.cache_dir) return std::nullopt;
  const auto path = cache_file(q);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    const json doc = json::parse(util::read_file(path.string()));
    const auto fetched = std::chrono::system_clock::time_point(std::chrono::seconds(doc.at("fetched_at_epoch").get<long long>()));
    if (clock_() - fetched > options_.max_cache_age) return std::nullopt;
    if (doc.at("source").get<std::string>() != source_name_) return std::nullopt;
    std::vector<CveRecord> records;
    for (const auto& r : doc.at("records")) records.push_back(cve_record_from_json(r));
    return records;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable cache entries are refetched
  }
}

void CveClient::write_disk_cache(const CveQuery& q, const std::vector<CveRecord>& records) const {
  if (!options_.cache_dir) return;
  const auto now = clock_();
  json recs = json::array();
  for (const auto& r : records) recs.push_back(to_json(r));
  const json doc{{"source", source_name_},
                 {"keyword", q.keyword},
                 {"limit", q.limit},
                 {"fetched_at", iso_utc(now)},
                 {"fetched_at_epoch", std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()},
                 {"records", recs}};
  util::write_file_atomic(cache_file(q).string(), doc.dump(2) + "\n");
}

std::vector<CveRecord> CveClient::search_with_retry(const CveQuery& q) {
  const int attempts = std::max(1, options_.max_attempts);
  for (int attempt = 1;; ++attempt) {
    limiter_.acquire();
    {
      std::lock_guard lock(mu_);
      ++network_calls_;
    }
    try {
      return source_->search(q.keyword, q.limit);
    } catch (const NetworkError&) {
      if (attempt >= attempts) throw;
      sleep_(options_.backoff_base * (1LL << (attempt - 1)));
    } catch (const RateLimitError& e) {
      if (attempt >= attempts) throw;
      sleep_(std::chrono::duration_cast<std::chrono::milliseconds>(e.retry_after()));
    }
  }
}

std::vector<CveRecord> CveClient::fetch_recent(const CveQuery& q) {
  q.validate();
  const std::pair<std::string, int> key{normalized_keyword(q.keyword), q.limit};
  {
    std::lock_guard lock(mu_);
    auto it = memory_.find(key);
    if (it != memory_.end()) return it->second;
  }
  if (auto cached = read_disk_cache(q)) {
    std::lock_guard lock(mu_);
    memory_[key] = *cached;
    return *cached;
  }

  auto records = search_with_retry(q);
  for (const auto& r : records) {
    const auto v = record_violations(r);
    if (!v.empty()) throw MalformedResponseError("source '" + source_name_ + "' returned an invalid record: " + v.front(),
                                                 to_json(r).dump().substr(0, 240));
  }
  std::sort(records.begin(), records.end(), more_recent);
  if (records.size() > static_cast<std::size_t>(q.limit)) records.resize(static_cast<std::size_t>(q.limit));

  write_disk_cache(q, records);
  std::lock_guard lock(mu_);
  memory_[key] = records;
  return records;
}

std::size_t clear_cve_cache(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") {
      fs::remove(e.path());
      ++n;
    }
  }
  return n;
}

}  // namespace stpasec
