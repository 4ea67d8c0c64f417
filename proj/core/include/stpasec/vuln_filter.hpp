#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stpasec/cve_client.hpp"
#include "stpasec/llm_gateway.hpp"
#include "stpasec/tech_identifier.hpp"

namespace stpasec {

// Version tag of the relevance prompt below; recorded with every verdict.
inline constexpr std::string_view kRelevanceTemplateVersion = "relevance-v1";
extern const std::string_view kRelevanceTemplate;

struct RelevanceQuery {
  std::string device_description;
  TechnologyFactor factor{};
  std::string keyword;
  CveRecord cve;

  void validate() const;  // PreconditionError on any empty field
};

struct RelevanceVerdict {
  RelevanceQuery query;
  bool relevant = false;
  std::string raw_token;  // "YES" or "NO"
  std::string model_id;
  std::string prompt_hash;
};

// A query whose verdict could not be obtained (format violation or provider
// failure). Excluded from generation and reported.
struct RelevanceOutcome {
  RelevanceQuery query;
  std::optional<RelevanceVerdict> verdict;
  std::string error;
  std::vector<std::string> rejected_responses;

  bool undecided() const { return !verdict.has_value(); }
};

// The "{factor}" slot value: display name with the keyword in parentheses.
std::string factor_slot(TechnologyFactor factor, std::string_view keyword);

std::string render_filter_prompt(const RelevanceQuery& q);

// Accepts YES or NO, case-insensitively, after trimming whitespace and at
// most one trailing period. Returns the upper-cased token.
std::optional<std::string> parse_relevance_token(std::string_view text);

struct FilterOptions {
  std::string model_id = "gpt-4o";
  double temperature = kDefaultTemperature;
};

// Throws FormatViolationError when the model never produces a bare token.
RelevanceVerdict assess(const RelevanceQuery& q, LlmGateway& gateway, const FilterOptions& options = {});

// Fans out over assess(); output order matches input order and per-item
// failures become undecided outcomes.
std::vector<RelevanceOutcome> assess_batch(const std::vector<RelevanceQuery>& queries, LlmGateway& gateway,
                                           const FilterOptions& options = {});

}  // namespace stpasec
