#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stpasec/document.hpp"
#include "stpasec/error.hpp"

namespace stpasec {

inline constexpr int kDefaultTopN = 10;

enum class Severity { None, Low, Medium, High, Critical };

std::string_view to_string(Severity s);
std::optional<Severity> parse_severity(std::string_view text);

struct CveRecord {
  std::string cve_id;
  std::string cna;
  std::string description;
  std::string published;  // ISO-8601 date or date-time
  std::optional<Severity> severity;
  std::optional<bool> patched;
  std::string source_url;

  bool operator==(const CveRecord&) const = default;
};

bool is_canonical_cve_id(std::string_view id);

// Parsed publication instant (UTC seconds since epoch) of an ISO-8601
// "YYYY-MM-DD[THH:MM[:SS[.fff]]][Z]" string.
std::optional<long long> parse_iso8601(std::string_view text);

// Empty when the record satisfies the CveRecord invariants.
std::vector<std::string> record_violations(const CveRecord& r);

// True when `a` sorts before `b` in recency order: published descending,
// then CVE id descending (year, then sequence number).
bool more_recent(const CveRecord& a, const CveRecord& b);

json to_json(const CveRecord& r);
CveRecord cve_record_from_json(const json& j);

struct CveQuery {
  std::string keyword;
  int limit = kDefaultTopN;

  void validate() const;  // PreconditionError on empty keyword or limit < 1
};

// Retryable transport failure.
class NetworkError : public Error {
 public:
  using Error::Error;
};

class RateLimitError : public Error {
 public:
  RateLimitError(std::string message, std::chrono::seconds retry_after)
      : Error(std::move(message)), retry_after_(retry_after) {}
  std::chrono::seconds retry_after() const { return retry_after_; }

 private:
  std::chrono::seconds retry_after_;
};

// Non-retryable; carries the start of the offending payload.
class MalformedResponseError : public Error {
 public:
  MalformedResponseError(std::string message, std::string excerpt)
      : Error(std::move(message)), excerpt_(std::move(excerpt)) {}
  const std::string& excerpt() const { return excerpt_; }

 private:
  std::string excerpt_;
};

// A vulnerability database. search() returns candidate records for the
// keyword; the client does sorting and truncation.
class CveSource {
 public:
  virtual ~CveSource() = default;
  virtual std::string name() const = 0;
  virtual std::vector<CveRecord> search(const std::string& keyword, int limit) = 0;
};

// Directory of JSON files, each {"keyword": ..., "records": [...]}.
// Keyword lookup is case-insensitive; unknown keywords have zero hits.
class FixtureCveSource : public CveSource {
 public:
  explicit FixtureCveSource(const std::filesystem::path& dir);
  std::string name() const override { return "fixture"; }
  std::vector<CveRecord> search(const std::string& keyword, int limit) override;
  long long searches() const { return searches_.load(); }

 private:
  std::map<std::string, std::vector<CveRecord>> by_keyword_;
  std::atomic<long long> searches_{0};
};

struct NvdOptions {
  std::string endpoint = "https://services.nvd.nist.gov/rest/json/cves/2.0";
  std::string api_key_env = "NVD_API_KEY";
  int page_size = 2000;
  std::chrono::seconds timeout{60};
};

// NVD CVE API 2.0 keyword search. Issues a one-row probe for totalResults,
// then reads the tail page, which holds the newest publications.
class NvdCveSource : public CveSource {
 public:
  explicit NvdCveSource(NvdOptions options = {});
  std::string name() const override { return "nvd"; }
  std::vector<CveRecord> search(const std::string& keyword, int limit) override;

 private:
  json get_page(const std::string& keyword, long long start_index, int results_per_page);

  NvdOptions options_;
  std::string api_key_;
};

// Parses one NVD 2.0 response body. Throws MalformedResponseError.
std::vector<CveRecord> parse_nvd_response(const std::string& body, long long* total_results = nullptr);

// Token bucket; acquire() blocks until a token is available.
class RateLimiter {
 public:
  RateLimiter(double requests_per_second, double burst);
  void acquire();

 private:
  std::mutex mu_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct CveClientOptions {
  std::optional<std::filesystem::path> cache_dir;
  std::chrono::seconds max_cache_age{std::chrono::hours(24)};
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  double requests_per_second = 5.0;
};

// Top-N most recent records per keyword with in-memory and on-disk caching.
class CveClient {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  CveClient(std::shared_ptr<CveSource> source, CveClientOptions options = {});

  // At most q.limit records sorted by more_recent(). Records violating the
  // CveRecord invariants raise MalformedResponseError.
  std::vector<CveRecord> fetch_recent(const CveQuery& q);

  void set_clock(Clock clock) { clock_ = std::move(clock); }
  void set_sleep_function(std::function<void(std::chrono::milliseconds)> sleep) {
    sleep_ = std::move(sleep);
  }

  long long network_calls() const;
  const std::string& source_name() const { return source_name_; }
  std::filesystem::path cache_file(const CveQuery& q) const;

 private:
  std::optional<std::vector<CveRecord>> read_disk_cache(const CveQuery& q) const;
  void write_disk_cache(const CveQuery& q, const std::vector<CveRecord>& records) const;
  std::vector<CveRecord> search_with_retry(const CveQuery& q);

  std::shared_ptr<CveSource> source_;
  std::string source_name_;
  CveClientOptions options_;
  RateLimiter limiter_;
  Clock clock_;
  std::function<void(std::chrono::milliseconds)> sleep_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, int>, std::vector<CveRecord>> memory_;
  long long network_calls_ = 0;
};

// Removes cached query files from `dir`; returns how many were deleted.
std::size_t clear_cve_cache(const std::filesystem::path& dir);

}  // namespace stpasec
