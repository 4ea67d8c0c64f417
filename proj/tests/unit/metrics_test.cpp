#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "stpasec/metrics.hpp"

namespace stpasec {
namespace {

TEST(Metrics, Precision) {
  const auto p = precision(36, 57);
  EXPECT_EQ(p.percent_string(), "63.2%");
  EXPECT_NEAR(p.value(), 36.0 / 57.0, 1e-12);
  EXPECT_EQ(precision(0, 3).percent_string(), "0.0%");
  EXPECT_EQ(precision(3, 3).percent_string(), "100.0%");
  EXPECT_THROW(precision(1, 0), DomainError);
  EXPECT_THROW(precision(4, 3), DomainError);
  EXPECT_THROW(precision(-1, 3), DomainError);
}

TEST(Metrics, AsgAverage) {
  const std::vector<double> devices{100.0, 100.0, 76.5, 100.0, 100.0};
  EXPECT_DOUBLE_EQ(asg_average(devices), 95.3);
  EXPECT_THROW(asg_average(std::vector<double>{}), DomainError);
  EXPECT_THROW(asg_average(std::vector<double>{101.0}), DomainError);
}

TEST(Metrics, Effort) {
  const auto e = effort_estimate({54, 22});
  EXPECT_EQ(e.manual_minutes, 328);
  EXPECT_EQ(e.automated_seconds, 534);
  EXPECT_NEAR(e.manual_minutes / 60.0, 5.5, 0.05);
  EXPECT_EQ(effort_estimate({0, 0}), (EffortEstimate{0, 0}));
  EXPECT_THROW(effort_estimate({3, 4}), DomainError);
  EXPECT_THROW(effort_estimate({-1, 0}), DomainError);
}

TEST(Metrics, RoundingHalfUp) {
  EXPECT_DOUBLE_EQ(round_one_decimal(95.25), 95.3);
  EXPECT_DOUBLE_EQ(round_one_decimal(76.47), 76.5);
  EXPECT_DOUBLE_EQ(round_one_decimal(76.44), 76.4);
  EXPECT_EQ(format_one_decimal(100.0), "100.0");
  EXPECT_EQ(format_one_decimal(0.05), "0.1");
}

TEST(MetricsProperty, PercentTenthsMatchesLongDivision) {
  std::mt19937 rng(3);
  for (int i = 0; i < 5000; ++i) {
    const long long d = 1 + rng() % 5000;
    const long long n = rng() % (d + 1);
    // Oracle: quotient and remainder of 1000n / d, rounded half-up.
    const long long q = 1000 * n / d, r = 1000 * n % d;
    const long long expected = q + (2 * r >= d ? 1 : 0);
    const Ratio ratio{n, d};
    EXPECT_EQ(ratio.percent_tenths(), expected) << n << "/" << d;
  }
}

TEST(MetricsProperty, EffortIsLinearAndMonotone) {
  for (long long x = 0; x < 60; ++x) {
    for (long long y = 0; y <= x; ++y) {
      const auto e = effort_estimate({x, y});
      if (y < x) {
        const auto more = effort_estimate({x, y + 1});
        EXPECT_EQ(more.manual_minutes - e.manual_minutes, 10);
        EXPECT_EQ(more.automated_seconds - e.automated_seconds, 12);
      }
      const auto next = effort_estimate({x + 1, y});
      EXPECT_EQ(next.manual_minutes - e.manual_minutes, 2);
      EXPECT_EQ(next.automated_seconds - e.automated_seconds, 5);
    }
  }
}

TEST(TechEvaluation, PrecisionRecallOverNormalizedKeys) {
  TechnologyList list;
  list.entries.push_back({"Wi-Fi", TechnologyFactor::CommunicationProtocol, {}});
  list.entries.push_back({"Zigbee", TechnologyFactor::CommunicationProtocol, {}});
  const std::set<TechKey> truth{{"wi-fi", TechnologyFactor::CommunicationProtocol},
                                {"iOS", TechnologyFactor::OperatingSystem}};
  const auto ev = tech_precision_recall(list, truth);
  EXPECT_EQ(ev.precision->percent_string(), "50.0%");
  EXPECT_EQ(ev.recall->percent_string(), "50.0%");
  ASSERT_EQ(ev.false_positives.size(), 1u);
  EXPECT_EQ(ev.false_positives[0].first, "zigbee");
  ASSERT_EQ(ev.false_negatives.size(), 1u);
  EXPECT_EQ(ev.false_negatives[0].first, "ios");
  EXPECT_FALSE(tech_precision_recall(TechnologyList{}, truth).precision);
}

TEST(CountTable, TotalsAndViolations) {
  CountTable t;
  t.rows.push_back({"A", 10, 4, 2, 2, 2, 0, {{TechnologyFactor::OperatingSystem, 2}}});
  t.rows.push_back({"B", 5, 3, 3, 4, 3, 1, {{TechnologyFactor::ExternalLibraryAndDataSource, 1}}});
  t.rows.push_back({"C", 0, 0, 0, 0, 0, 0, {}});
  EXPECT_EQ(t.total_retrieved(), 15);
  EXPECT_EQ(t.total_auto(), 7);
  EXPECT_EQ(t.total_verified(), 5);
  EXPECT_EQ(t.total_technologies(), 3);
  EXPECT_DOUBLE_EQ(*t.average_accuracy(), 87.5);
  EXPECT_FALSE(t.rows[2].asg_accuracy());
  EXPECT_TRUE(t.rows[0].violations().empty());
  EXPECT_FALSE((CountRow{"X", 1, 2, 0, 0, 0, 0, {}}).violations().empty());
  EXPECT_FALSE((CountRow{"X", 2, 1, 2, 0, 0, 0, {}}).violations().empty());
  EXPECT_FALSE((CountRow{"X", 2, 1, 1, 1, 2, 0, {}}).violations().empty());

  const auto md = render_count_table_markdown(t);
  EXPECT_NE(md.find("| A | - | - | - | - | - | 2 | - | 10 | 4 | 2 |"), std::string::npos);
  EXPECT_NE(md.find("**Total**"), std::string::npos);
}

}  // namespace
}  // namespace stpasec
