#include "stpasec/vuln_filter.hpp"

#include "parallel.hpp"
#include "stpasec/util.hpp"

namespace stpasec {

const std::string_view kRelevanceTemplate =
    "You are a security engineer. Decide if the vulnerability with (CVE No.: {cve} and Description: {description}) "
    "below could plausibly enable an attacker to INJECT, MODIFY, or SPOOF data used by an ML component in a medical "
    "device ({device}) and cause incorrect ML predictions. First, check if the technology factor {factor} is affected "
    "by this vulnerability {cve}. Proceed with the next steps only if the medical device ({device}) uses the "
    "{factor}. If it doesn't, answer with NO. Otherwise, follow the next steps.\n"
    "Answer strictly with:\n"
    "YES  - if the {cve} plausibly allows data tampering/insertion/spoofing.\n"
    "NO   - if it is only info disclosure/enum, UI redirect, DoS-only, or cannot reasonably lead to data being "
    "altered/inserted for the system.\n"
    "Return ONLY the single token YES or NO.\n"
    "\n"
    "Medical device: {device}\n"
    "Technological factor: {factor}\n"
    "CVE: {cve}\n"
    "CNA: {cna}\n"
    "CVE Description: {description}\n";

void RelevanceQuery::validate() const {
  if (util::trim(device_description).empty()) throw PreconditionError("relevance query: empty device description");
  if (util::trim(keyword).empty()) throw PreconditionError("relevance query: empty technology keyword");
  if (cve.cve_id.empty()) throw PreconditionError("relevance query: empty CVE id");
  if (util::trim(cve.description).empty()) {
    throw PreconditionError("relevance query: empty description for " + cve.cve_id);
  }
}

std::string factor_slot(TechnologyFactor factor, std::string_view keyword) {
  return std::string(display_name(factor)) + " (" + std::string(keyword) + ")";
}

std::string render_filter_prompt(const RelevanceQuery& q) {
  q.validate();
  return util::substitute(kRelevanceTemplate, {{"cve", q.cve.cve_id},
                                               {"description", q.cve.description},
                                               {"device", q.device_description},
                                               {"factor", factor_slot(q.factor, q.keyword)},
                                               {"cna", q.cve.cna.empty() ? "unknown" : q.cve.cna}});
}

std::optional<std::string> parse_relevance_token(std::string_view text) {
  std::string t = util::trim(text);
  if (!t.empty() && t.back() == '.') t.pop_back();
  const std::string upper = util::to_upper(t);
  if (upper == "YES" || upper == "NO") return upper;
  return std::nullopt;
}

RelevanceVerdict assess(const RelevanceQuery& q, LlmGateway& gateway, const FilterOptions& options) {
  LlmRequest req;
  req.prompt = render_filter_prompt(q);
  req.temperature = options.temperature;
  req.model_id = options.model_id;
  req.max_output = 16;
  const auto resp = gateway.complete_constrained(req, [](std::string_view text) -> std::optional<std::string> {
    if (parse_relevance_token(text)) return std::nullopt;
    return "reply with the single token YES or NO";
  });
  RelevanceVerdict v;
  v.query = q;
  v.raw_token = *parse_relevance_token(resp.text);
  v.relevant = v.raw_token == "YES";
  v.model_id = resp.model_id;
  v.prompt_hash = prompt_hash(req.prompt);
  return v;
}

std::vector<RelevanceOutcome> assess_batch(const std::vector<RelevanceQuery>& queries, LlmGateway& gateway,
                                           const FilterOptions& options) {
  return detail::parallel_map(queries, gateway.options().max_in_flight, [&](const RelevanceQuery& q) {
    RelevanceOutcome out;
    out.query = q;
    try {
      out.verdict = assess(q, gateway, options);
    } catch (const FormatViolationError& e) {
      out.error = e.what();
      out.rejected_responses = e.rejected();
    } catch (const BudgetExceededError&) {
      throw;
    } catch (const AuthError&) {
      throw;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    return out;
  });
}

}  // namespace stpasec
