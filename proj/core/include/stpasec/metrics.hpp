#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stpasec/error.hpp"
#include "stpasec/tech_identifier.hpp"

namespace stpasec {

class DomainError : public Error {
 public:
  using Error::Error;
};

// Exact non-negative ratio; percentages are rounded half-up to one decimal.
struct Ratio {
  long long numerator = 0;
  long long denominator = 1;

  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
  long long percent_tenths() const;
  std::string percent_string() const;  // "63.2%"
};

// Rounds half-up to one decimal place.
double round_one_decimal(double x);
std::string format_one_decimal(double x);

// Throws DomainError when selected == 0 or tp is outside [0, selected].
Ratio precision(long long tp, long long selected);

// Unweighted mean of per-device percentages, rounded to one decimal.
double asg_average(std::span<const double> per_device);

struct EffortInputs {
  long long x = 0;  // CVE records
  long long y = 0;  // relevant ones

  void validate() const;
};

struct EffortEstimate {
  long long manual_minutes = 0;
  long long automated_seconds = 0;

  bool operator==(const EffortEstimate&) const = default;
};

EffortEstimate effort_estimate(const EffortInputs& e);

using TechKey = std::pair<std::string, TechnologyFactor>;  // (normalized keyword, factor)

struct TechEvaluation {
  std::optional<Ratio> precision;  // unset when nothing was extracted
  std::optional<Ratio> recall;     // unset when the ground truth is empty
  std::vector<TechKey> false_positives;
  std::vector<TechKey> false_negatives;
};

TechEvaluation tech_precision_recall(const TechnologyList& extracted, const std::set<TechKey>& ground_truth);

struct CountRow {
  std::string device;
  long long retrieved_cve = 0;
  long long auto_cve = 0;
  long long verified_cve = 0;
  long long scenarios_total = 0;     // judged scenarios (accepted + rejected)
  long long scenarios_accepted = 0;
  long long scenarios_unjudgeable = 0;
  std::map<TechnologyFactor, int> tech_counts;

  std::vector<std::string> violations() const;
  std::optional<double> asg_accuracy() const;  // percent, unrounded
};

struct CountTable {
  std::vector<CountRow> rows;

  long long total_retrieved() const;
  long long total_auto() const;
  long long total_verified() const;
  long long total_technologies() const;
  // Mean of the defined per-device accuracies.
  std::optional<double> average_accuracy() const;
};

std::string render_count_table_markdown(const CountTable& table);

}  // namespace stpasec
