#include "stpasec/metrics.hpp"

#include <cmath>
#include <sstream>

namespace stpasec {

long long Ratio::percent_tenths() const {
  // Half-up rounding of 1000 * n / d in integer arithmetic.
  return (2000 * numerator + denominator) / (2 * denominator);
}

std::string Ratio::percent_string() const {
  const long long t = percent_tenths();
  return std::to_string(t / 10) + "." + std::to_string(t % 10) + "%";
}

double round_one_decimal(double x) {
  // The epsilon absorbs binary representation error in values such as 95.25.
  return std::floor(x * 10.0 + 0.5 + 1e-9) / 10.0;
}

std::string format_one_decimal(double x) {
  const long long tenths = static_cast<long long>(std::floor(x * 10.0 + 0.5 + 1e-9));
  std::string sign = tenths < 0 ? "-" : "";
  const long long a = std::llabs(tenths);
  return sign + std::to_string(a / 10) + "." + std::to_string(a % 10);
}

Ratio precision(long long tp, long long selected) {
  if (selected <= 0) throw DomainError("precision is undefined when nothing was selected");
  if (tp < 0 || tp > selected) {
    throw DomainError("true positives " + std::to_string(tp) + " outside [0, " + std::to_string(selected) + "]");
  }
  return {tp, selected};
}

double asg_average(std::span<const double> per_device) {
  if (per_device.empty()) throw DomainError("average accuracy needs at least one device");
  double sum = 0;
  for (double v : per_device) {
    if (!(v >= 0.0 && v <= 100.0)) throw DomainError("accuracy " + std::to_string(v) + " outside [0, 100]");
    sum += v;
  }
  return round_one_decimal(sum / static_cast<double>(per_device.size()));
}

void EffortInputs::validate() const {
  if (x < 0 || y < 0 || y > x) {
    throw DomainError("effort inputs need 0 <= y <= x (x=" + std::to_string(x) + ", y=" + std::to_string(y) + ")");
  }
}

EffortEstimate effort_estimate(const EffortInputs& e) {
  e.validate();
  return {2 * e.x + 10 * e.y, 5 * e.x + 12 * e.y};
}

TechEvaluation tech_precision_recall(const TechnologyList& extracted, const std::set<TechKey>& ground_truth) {
  std::set<TechKey> got;
  for (const auto& entry : extracted.entries) got.emplace(normalize_keyword(entry.keyword), entry.factor);
  std::set<TechKey> truth;
  for (const auto& [kw, f] : ground_truth) truth.emplace(normalize_keyword(kw), f);

  TechEvaluation ev;
  long long tp = 0;
  for (const auto& k : got) {
    if (truth.count(k)) {
      ++tp;
    } else {
      ev.false_positives.push_back(k);
    }
  }
  for (const auto& k : truth) {
    if (!got.count(k)) ev.false_negatives.push_back(k);
  }
  if (!got.empty()) ev.precision = Ratio{tp, static_cast<long long>(got.size())};
  if (!truth.empty()) ev.recall = Ratio{tp, static_cast<long long>(truth.size())};
  return ev;
}

std::vector<std::string> CountRow::violations() const {
  std::vector<std::string> v;
  auto nonneg = [&](long long x, const char* what) {
    if (x < 0) v.push_back(device + ": " + what + " is negative");
  };
  nonneg(retrieved_cve, "retrieved_cve");
  nonneg(auto_cve, "auto_cve");
  nonneg(verified_cve, "verified_cve");
  nonneg(scenarios_total, "scenarios_total");
  nonneg(scenarios_accepted, "scenarios_accepted");
  nonneg(scenarios_unjudgeable, "scenarios_unjudgeable");
  for (const auto& [f, n] : tech_counts) {
    if (n < 0) v.push_back(device + ": negative technology count for " + std::string(display_name(f)));
  }
  if (verified_cve > auto_cve) v.push_back(device + ": verified_cve exceeds auto_cve");
  if (auto_cve > retrieved_cve) v.push_back(device + ": auto_cve exceeds retrieved_cve");
  if (scenarios_accepted > scenarios_total) v.push_back(device + ": scenarios_accepted exceeds scenarios_total");
  return v;
}

std::optional<double> CountRow::asg_accuracy() const {
  if (scenarios_total <= 0) return std::nullopt;
  return 100.0 * static_cast<double>(scenarios_accepted) / static_cast<double>(scenarios_total);
}

long long CountTable::total_retrieved() const {
  long long n = 0;
  for (const auto& r : rows) n += r.retrieved_cve;
  return n;
}

long long CountTable::total_auto() const {
  long long n = 0;
  for (const auto& r : rows) n += r.auto_cve;
  return n;
}

long long CountTable::total_verified() const {
  long long n = 0;
  for (const auto& r : rows) n += r.verified_cve;
  return n;
}

long long CountTable::total_technologies() const {
  long long n = 0;
  for (const auto& r : rows) {
    for (const auto& [f, c] : r.tech_counts) n += c;
  }
  return n;
}

std::optional<double> CountTable::average_accuracy() const {
  std::vector<double> values;
  for (const auto& r : rows) {
    // Per-device values are rounded for presentation before averaging.
    if (auto a = r.asg_accuracy()) values.push_back(round_one_decimal(*a));
  }
  if (values.empty()) return std::nullopt;
  return asg_average(values);
}

std::string render_count_table_markdown(const CountTable& table) {
  std::ostringstream out;
  out << "| Device |";
  for (auto f : kAllFactors) out << ' ' << short_code(f) << " |";
  out << " Retrieved CVEs | AutoCVE | VerifiedCVE | Scenarios judged | Accepted | Unjudgeable | ASG accuracy (%) |\n";
  out << "|---|";
  for (std::size_t i = 0; i < kAllFactors.size(); ++i) out << "---|";
  out << "---|---|---|---|---|---|---|\n";

  long long judged = 0, accepted = 0, unjudgeable = 0;
  for (const auto& r : table.rows) {
    out << "| " << r.device << " |";
    for (auto f : kAllFactors) {
      auto it = r.tech_counts.find(f);
      if (it == r.tech_counts.end() || it->second == 0) {
        out << " - |";
      } else {
        out << ' ' << it->second << " |";
      }
    }
    const auto acc = r.asg_accuracy();
    out << ' ' << r.retrieved_cve << " | " << r.auto_cve << " | " << r.verified_cve << " | " << r.scenarios_total
        << " | " << r.scenarios_accepted << " | " << r.scenarios_unjudgeable << " | "
        << (acc ? format_one_decimal(*acc) : std::string("n/a")) << " |\n";
    judged += r.scenarios_total;
    accepted += r.scenarios_accepted;
    unjudgeable += r.scenarios_unjudgeable;
  }
  out << "| **Total** |";
  for (auto f : kAllFactors) {
    long long n = 0;
    for (const auto& r : table.rows) {
      auto it = r.tech_counts.find(f);
      if (it != r.tech_counts.end()) n += it->second;
    }
    out << ' ' << (n == 0 ? std::string("-") : std::to_string(n)) << " |";
  }
  const auto avg = table.average_accuracy();
  out << ' ' << table.total_retrieved() << " | " << table.total_auto() << " | " << table.total_verified() << " | "
      << judged << " | " << accepted << " | " << unjudgeable << " | "
      << (avg ? format_one_decimal(*avg) + " (mean)" : std::string("n/a")) << " |\n";
  return out.str();
}

}  // namespace stpasec
