#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "stpasec/document.hpp"
#include "stpasec/error.hpp"

namespace stpasec {

class LlmGateway;

enum class TechnologyFactor {
  CommunicationProtocol,
  CommunicationEncryption,
  ElectromagneticSusceptibility,
  Firmware,
  Hardware,
  OperatingSystem,
  ExternalLibraryAndDataSource,
};

inline constexpr std::array<TechnologyFactor, 7> kAllFactors = {
    TechnologyFactor::CommunicationProtocol,     TechnologyFactor::CommunicationEncryption,
    TechnologyFactor::ElectromagneticSusceptibility, TechnologyFactor::Firmware,
    TechnologyFactor::Hardware,                  TechnologyFactor::OperatingSystem,
    TechnologyFactor::ExternalLibraryAndDataSource,
};

// "Communication Protocol", "Communication encryption", ...
std::string_view display_name(TechnologyFactor f);
// CP, ENCR, EM, FW, HW, OS, EXT
std::string_view short_code(TechnologyFactor f);
// Accepts the display name or short code, case-insensitively.
std::optional<TechnologyFactor> parse_factor(std::string_view text);

using FactorSet = std::set<TechnologyFactor>;

struct Document {
  std::string doc_id;
  std::string text;
};

struct DocumentCorpus {
  std::string device_name;
  std::vector<Document> documents;

  const Document* find(std::string_view doc_id) const;
};

// Throws ConfigError on duplicate doc ids or empty text.
void validate_corpus(const DocumentCorpus& corpus);

// Reads manifest.json ({"device_name", "documents": [doc ids]}) and the
// matching <doc_id>.txt files from `dir`.
DocumentCorpus load_corpus(const std::filesystem::path& dir);

struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const CharSpan&) const = default;
  auto operator<=>(const CharSpan&) const = default;
};

struct TechnologyMention {
  std::string keyword;
  TechnologyFactor factor{};
  std::string doc_id;
  std::optional<CharSpan> span;  // unset when the backend could not locate it
  std::string extractor;

  bool operator==(const TechnologyMention&) const = default;
};

struct TechnologyEntry {
  std::string keyword;
  TechnologyFactor factor{};
  std::vector<TechnologyMention> mentions;

  bool operator==(const TechnologyEntry&) const = default;
};

struct TechnologyList {
  std::string device_name;
  std::vector<TechnologyEntry> entries;

  bool operator==(const TechnologyList&) const = default;
  std::map<TechnologyFactor, int> counts() const;
};

// --- exact word matching -------------------------------------------------
//
// A keyword matches a position in the text when the characters agree
// case-insensitively, every whitespace run inside the keyword lines up with a
// non-empty whitespace run in the text, and the match does not start or end
// inside a word. Hyphens and spaces are distinct characters.

std::string normalize_keyword(std::string_view keyword);
std::vector<CharSpan> find_word_matches(std::string_view text, std::string_view keyword);
bool span_matches(std::string_view text, CharSpan span, std::string_view keyword);

// --- extractor backends --------------------------------------------------

class BackendUnavailableError : public Error {
 public:
  using Error::Error;
};

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual std::string name() const = 0;
  virtual std::vector<TechnologyMention> extract(const DocumentCorpus& corpus,
                                                 const FactorSet& factors) = 0;
};

// Term lexicon per factor.
struct Gazetteer {
  std::map<TechnologyFactor, std::vector<std::string>> terms;

  static Gazetteer from_json(const json& doc);
  static Gazetteer load(const std::filesystem::path& path);
};

// Emits one mention per lexicon hit. Within a factor, a hit whose span lies
// strictly inside a longer hit is dropped.
class GazetteerExtractor : public Extractor {
 public:
  explicit GazetteerExtractor(Gazetteer gazetteer) : gazetteer_(std::move(gazetteer)) {}
  std::string name() const override { return "gazetteer"; }
  std::vector<TechnologyMention> extract(const DocumentCorpus& corpus,
                                         const FactorSet& factors) override;

 private:
  Gazetteer gazetteer_;
};

// Asks a model for "factor | keyword" lines, one prompt per document.
class LlmExtractor : public Extractor {
 public:
  LlmExtractor(LlmGateway& gateway, std::string model_id, double temperature);
  std::string name() const override { return "llm:" + model_id_; }
  std::vector<TechnologyMention> extract(const DocumentCorpus& corpus,
                                         const FactorSet& factors) override;

 private:
  LlmGateway& gateway_;
  std::string model_id_;
  double temperature_;
};

std::string render_extraction_prompt(const Document& doc, const FactorSet& factors);

// Parses "factor | keyword" lines; lines that do not conform, or name a
// factor outside `factors`, are dropped.
std::vector<std::pair<TechnologyFactor, std::string>> parse_extraction_response(
    std::string_view text, const FactorSet& factors);

// --- operations ----------------------------------------------------------

// Runs one backend. Throws PreconditionError for an empty factor set;
// backend failures surface as BackendUnavailableError.
std::vector<TechnologyMention> extract(const DocumentCorpus& corpus, const FactorSet& factors,
                                       Extractor& backend);

struct FilteredMention {
  TechnologyMention mention;
  std::string reason;  // "hallucination-filtered" or "unknown-document"
};

// Keeps a mention iff its keyword occurs in its document. Surviving mentions
// carry the span of a verified occurrence.
std::vector<TechnologyMention> exact_match_filter(const std::vector<TechnologyMention>& mentions,
                                                  const DocumentCorpus& corpus,
                                                  std::vector<FilteredMention>* removed = nullptr);

// Groups by (normalized keyword, factor). Entry order is factor then keyword;
// the result does not depend on the order of `lists`.
TechnologyList merge_and_dedup(const std::vector<std::vector<TechnologyMention>>& lists,
                               std::string device_name = {});

json to_json(const TechnologyMention& m);
TechnologyMention mention_from_json(const json& j);
json to_json(const TechnologyList& list);
TechnologyList technology_list_from_json(const json& j);

}  // namespace stpasec
