#include "stpasec/tech_identifier.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <tuple>

#include "stpasec/llm_gateway.hpp"
#include "stpasec/util.hpp"

namespace stpasec {

namespace {

struct FactorInfo {
  TechnologyFactor factor;
  std::string_view display;
  std::string_view code;
};

constexpr std::array<FactorInfo, 7> kFactorInfo = {{
    {TechnologyFactor::CommunicationProtocol, "Communication Protocol", "CP"},
    {TechnologyFactor::CommunicationEncryption, "Communication encryption", "ENCR"},
    {TechnologyFactor::ElectromagneticSusceptibility, "Electromagnetic Susceptibility", "EM"},
    {TechnologyFactor::Firmware, "Firmware", "FW"},
    {TechnologyFactor::Hardware, "Hardware", "HW"},
    {TechnologyFactor::OperatingSystem, "Operating System", "OS"},
    {TechnologyFactor::ExternalLibraryAndDataSource, "External Library and Data source", "EXT"},
}};

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char fold(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::vector<std::string> keyword_tokens(std::string_view keyword) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : keyword) {
    if (is_space(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// End offset of a match of `tokens` starting exactly at `pos`, if any.
std::optional<std::size_t> match_at(std::string_view text, std::size_t pos, const std::vector<std::string>& tokens) {
  std::size_t j = pos;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k > 0) {
      if (j >= text.size() || !is_space(text[j])) return std::nullopt;
      while (j < text.size() && is_space(text[j])) ++j;
    }
    const auto& t = tokens[k];
    if (text.size() - j < t.size()) return std::nullopt;
    for (std::size_t m = 0; m < t.size(); ++m) {
      if (fold(text[j + m]) != fold(t[m])) return std::nullopt;
    }
    j += t.size();
  }
  return j;
}

bool boundaries_ok(std::string_view text, std::size_t start, std::size_t end, const std::vector<std::string>& tokens) {
  const char first = tokens.front().front();
  const char last = tokens.back().back();
  if (is_word_char(first) && start > 0 && is_word_char(text[start - 1])) return false;
  if (is_word_char(last) && end < text.size() && is_word_char(text[end])) return false;
  return true;
}

std::string strip_wrapping_quotes(std::string s) {
  if (s.size() >= 2) {
    const char a = s.front();
    const char b = s.back();
    if ((a == '"' && b == '"') || (a == '\'' && b == '\'') || (a == '`' && b == '`')) {
      return util::trim(std::string_view(s).substr(1, s.size() - 2));
    }
  }
  return s;
}

}  // namespace

std::string_view display_name(TechnologyFactor f) {
  for (const auto& info : kFactorInfo) {
    if (info.factor == f) return info.display;
  }
  return {};
}

std::string_view short_code(TechnologyFactor f) {
  for (const auto& info : kFactorInfo) {
    if (info.factor == f) return info.code;
  }
  return {};
}

std::optional<TechnologyFactor> parse_factor(std::string_view text) {
  const auto t = util::collapse_whitespace(text);
  for (const auto& info : kFactorInfo) {
    if (util::iequals(info.display, t) || util::iequals(info.code, t)) return info.factor;
  }
  return std::nullopt;
}

const Document* DocumentCorpus::find(std::string_view doc_id) const {
  for (const auto& d : documents) {
    if (d.doc_id == doc_id) return &d;
  }
  return nullptr;
}

void validate_corpus(const DocumentCorpus& corpus) {
  std::set<std::string> ids;
  for (const auto& d : corpus.documents) {
    if (d.doc_id.empty()) throw ConfigError("corpus '" + corpus.device_name + "': empty doc_id");
    if (!ids.insert(d.doc_id).second) {
      throw ConfigError("corpus '" + corpus.device_name + "': duplicate doc_id '" + d.doc_id + "'");
    }
    if (util::trim(d.text).empty()) {
      throw ConfigError("corpus '" + corpus.device_name + "': document '" + d.doc_id + "' is empty");
    }
  }
}

DocumentCorpus load_corpus(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  FieldReader r(load_document(manifest_path), manifest_path.string());
  DocumentCorpus corpus;
  corpus.device_name = r.required_string("device_name");
  const json& docs = r.required("documents");
  if (!docs.is_array()) throw ConfigError(manifest_path.string() + ": 'documents' must be a list of doc ids");
  r.finish();
  for (const auto& d : docs) {
    if (!d.is_string()) throw ConfigError(manifest_path.string() + ": doc ids must be strings");
    const auto id = d.get<std::string>();
    corpus.documents.push_back({id, util::read_file((dir / (id + ".txt")).string())});
  }
  validate_corpus(corpus);
  return corpus;
}

std::map<TechnologyFactor, int> TechnologyList::counts() const {
  std::map<TechnologyFactor, int> out;
  for (const auto& e : entries) ++out[e.factor];
  return out;
}

std::string normalize_keyword(std::string_view keyword) { return util::to_lower(util::collapse_whitespace(keyword)); }

std::vector<CharSpan> find_word_matches(std::string_view text, std::string_view keyword) {
  const auto tokens = keyword_tokens(keyword);
  std::vector<CharSpan> spans;
  if (tokens.empty()) return spans;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (fold(text[i]) != fold(tokens.front().front())) continue;
    const auto end = match_at(text, i, tokens);
    if (end && boundaries_ok(text, i, *end, tokens)) spans.push_back({i, *end});
  }
  return spans;
}

bool span_matches(std::string_view text, CharSpan span, std::string_view keyword) {
  const auto tokens = keyword_tokens(keyword);
  if (tokens.empty() || span.start >= span.end || span.end > text.size()) return false;
  const auto end = match_at(text, span.start, tokens);
  return end && *end == span.end && boundaries_ok(text, span.start, span.end, tokens);
}

Gazetteer Gazetteer::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("gazetteer: expected an object mapping factor names to term lists");
  Gazetteer g;
  for (const auto& [key, terms] : doc.items()) {
    const auto factor = parse_factor(key);
    if (!factor) throw ConfigError("gazetteer: unknown technology factor '" + key + "'");
    if (!terms.is_array()) throw ConfigError("gazetteer: terms for '" + key + "' must be a list");
    auto& list = g.terms[*factor];
    for (const auto& t : terms) {
      if (!t.is_string() || util::trim(t.get<std::string>()).empty()) {
        throw ConfigError("gazetteer: terms for '" + key + "' must be non-empty strings");
      }
      list.push_back(util::trim(t.get<std::string>()));
    }
  }
  return g;
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  try {
    return from_json(load_document(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<TechnologyMention> GazetteerExtractor::extract(const DocumentCorpus& corpus, const FactorSet& factors) {
  std::vector<TechnologyMention> out;
  for (const auto& doc : corpus.documents) {
    for (const auto& [factor, terms] : gazetteer_.terms) {
      if (!factors.count(factor)) continue;
      std::vector<TechnologyMention> hits;
      for (const auto& term : terms) {
        for (const auto& span : find_word_matches(doc.text, term)) {
          hits.push_back({term, factor, doc.doc_id, span, name()});
        }
      }
      auto inside_longer = [&](const TechnologyMention& m) {
        return std::any_of(hits.begin(), hits.end(), [&](const TechnologyMention& o) {
          return o.span->start <= m.span->start && m.span->end <= o.span->end &&
                 (o.span->end - o.span->start) > (m.span->end - m.span->start);
        });
      };
      for (const auto& m : hits) {
        if (!inside_longer(m)) out.push_back(m);
      }
    }
  }
  return out;
}

LlmExtractor::LlmExtractor(LlmGateway& gateway, std::string model_id, double temperature)
    : gateway_(gateway), model_id_(std::move(model_id)), temperature_(temperature) {}

std::string render_extraction_prompt(const Document& doc, const FactorSet& factors) {
  std::string categories;
  for (auto f : kAllFactors) {
    if (factors.count(f)) categories += "- " + std::string(display_name(f)) + "\n";
  }
  return "You are extracting technology names from medical device documentation.\n"
         "List every technology named in the document below that belongs to one of these categories:\n" +
         categories +
         "Copy each technology name exactly as it is written in the document. "
         "Do not list technologies that are not written in the document.\n"
         "Answer with one line per technology in the form:\n"
         "<category> | <technology>\n"
         "Answer NONE if the document names no such technology.\n"
         "\n"
         "Document ID: " +
         doc.doc_id +
         "\n"
         "Document:\n" +
         doc.text;
}

std::vector<std::pair<TechnologyFactor, std::string>> parse_extraction_response(std::string_view text,
                                                                               const FactorSet& factors) {
  std::vector<std::pair<TechnologyFactor, std::string>> out;
  for (const auto& raw : util::split_lines(text)) {
    std::string line = util::trim(raw);
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) line = util::trim(std::string_view(line).substr(1));
    const auto bar = line.find('|');
    if (bar == std::string::npos || line.find('|', bar + 1) != std::string::npos) continue;
    const auto factor = parse_factor(util::trim(std::string_view(line).substr(0, bar)));
    if (!factor || !factors.count(*factor)) continue;
    auto keyword = strip_wrapping_quotes(util::trim(std::string_view(line).substr(bar + 1)));
    if (keyword.empty()) continue;
    out.emplace_back(*factor, std::move(keyword));
  }
  return out;
}

std::vector<TechnologyMention> LlmExtractor::extract(const DocumentCorpus& corpus, const FactorSet& factors) {
  std::vector<TechnologyMention> out;
  for (const auto& doc : corpus.documents) {
    LlmRequest req;
    req.role_preamble = "You are a precise named entity recognition system.";
    req.prompt = render_extraction_prompt(doc, factors);
    req.temperature = temperature_;
    req.model_id = model_id_;
    LlmResponse resp;
    try {
      resp = gateway_.complete(req);
    } catch (const Error& e) {
      throw BackendUnavailableError(name() + " failed on document '" + doc.doc_id + "': " + e.what());
    }
    for (auto& [factor, keyword] : parse_extraction_response(resp.text, factors)) {
      const auto spans = find_word_matches(doc.text, keyword);
      std::optional<CharSpan> span;
      if (!spans.empty()) span = spans.front();
      out.push_back({std::move(keyword), factor, doc.doc_id, span, name()});
    }
  }
  return out;
}

std::vector<TechnologyMention> extract(const DocumentCorpus& corpus, const FactorSet& factors, Extractor& backend) {
  if (factors.empty()) throw PreconditionError("extract: the factor set must not be empty");
  std::vector<TechnologyMention> raw;
  try {
    raw = backend.extract(corpus, factors);
  } catch (const BackendUnavailableError&) {
    throw;
  } catch (const Error& e) {
    throw BackendUnavailableError(backend.name() + ": " + e.what());
  }
  std::vector<TechnologyMention> out;
  for (auto& m : raw) {
    if (!factors.count(m.factor) || util::trim(m.keyword).empty()) continue;
    m.extractor = backend.name();
    if (m.span) {
      const Document* doc = corpus.find(m.doc_id);
      if (!doc || !span_matches(doc->text, *m.span, m.keyword)) m.span.reset();
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<TechnologyMention> exact_match_filter(const std::vector<TechnologyMention>& mentions,
                                                  const DocumentCorpus& corpus, std::vector<FilteredMention>* removed) {
  std::vector<TechnologyMention> kept;
  for (const auto& m : mentions) {
    const Document* doc = corpus.find(m.doc_id);
    if (!doc) {
      if (removed) removed->push_back({m, "unknown-document"});
      continue;
    }
    if (m.span && span_matches(doc->text, *m.span, m.keyword)) {
      kept.push_back(m);
      continue;
    }
    const auto spans = find_word_matches(doc->text, m.keyword);
    if (spans.empty()) {
      if (removed) removed->push_back({m, "hallucination-filtered"});
      continue;
    }
    auto copy = m;
    copy.span = spans.front();
    kept.push_back(std::move(copy));
  }
  return kept;
}

TechnologyList merge_and_dedup(const std::vector<std::vector<TechnologyMention>>& lists, std::string device_name) {
  std::map<std::tuple<TechnologyFactor, std::string>, TechnologyEntry> grouped;
  for (const auto& list : lists) {
    for (const auto& m : list) {
      auto& entry = grouped[{m.factor, normalize_keyword(m.keyword)}];
      if (entry.mentions.empty() || m.keyword < entry.keyword) entry.keyword = m.keyword;
      entry.factor = m.factor;
      entry.mentions.push_back(m);
    }
  }
  auto mention_key = [](const TechnologyMention& m) {
    return std::make_tuple(m.extractor, m.doc_id, m.span, m.keyword);
  };
  TechnologyList result;
  result.device_name = std::move(device_name);
  for (auto& [key, entry] : grouped) {
    std::sort(entry.mentions.begin(), entry.mentions.end(),
              [&](const auto& a, const auto& b) { return mention_key(a) < mention_key(b); });
    entry.mentions.erase(std::unique(entry.mentions.begin(), entry.mentions.end()), entry.mentions.end());
    result.entries.push_back(std::move(entry));
  }
  return result;
}

json to_json(const TechnologyMention& m) {
  json j{{"keyword", m.keyword},
         {"factor", display_name(m.factor)},
         {"doc_id", m.doc_id},
         {"extractor", m.extractor}};
  j["span"] = m.span ? json::array({m.span->start, m.span->end}) : json(nullptr);
  return j;
}

TechnologyMention mention_from_json(const json& j) {
  TechnologyMention m;
  m.keyword = j.at("keyword").get<std::string>();
  const auto f = parse_factor(j.at("factor").get<std::string>());
  if (!f) throw ConfigError("unknown technology factor '" + j.at("factor").get<std::string>() + "'");
  m.factor = *f;
  m.doc_id = j.at("doc_id").get<std::string>();
  m.extractor = j.at("extractor").get<std::string>();
  if (j.contains("span") && j["span"].is_array()) {
    m.span = CharSpan{j["span"][0].get<std::size_t>(), j["span"][1].get<std::size_t>()};
  }
  return m;
}

json to_json(const TechnologyList& list) {
  json entries = json::array();
  for (const auto& e : list.entries) {
    json mentions = json::array();
    for (const auto& m : e.mentions) mentions.push_back(to_json(m));
    entries.push_back({{"keyword", e.keyword}, {"factor", display_name(e.factor)}, {"mentions", mentions}});
  }
  return {{"device_name", list.device_name}, {"entries", entries}};
}

TechnologyList technology_list_from_json(const json& j) {
  TechnologyList list;
  list.device_name = j.at("device_name").get<std::string>();
  for (const auto& e : j.at("entries")) {
    TechnologyEntry entry;
    entry.keyword = e.at("keyword").get<std::string>();
    const auto f = parse_factor(e.at("factor").get<std::string>());
    if (!f) throw ConfigError("unknown technology factor '" + e.at("factor").get<std::string>() + "'");
    entry.factor = *f;
    for (const auto& m : e.at("mentions")) entry.mentions.push_back(mention_from_json(m));
    list.entries.push_back(std::move(entry));
  }
  return list;
}

}  // namespace stpasec
