#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

namespace stpasec {

using json = nlohmann::json;

// Loads a JSON or YAML document (chosen by extension; .yaml/.yml are YAML,
// everything else is JSON). Throws ConfigError with the path on failure.
json load_document(const std::filesystem::path& path);

// Parses YAML text into the equivalent JSON value. Plain scalars resolve
// per the YAML core schema (null, bool, int, float); quoted scalars stay strings.
json yaml_to_json(const std::string& text);

// Typed, key-tracking accessor over a JSON object. finish() rejects any
// key that was never read.
class FieldReader {
 public:
  FieldReader(const json& object, std::string context);

  std::string required_string(const std::string& key);
  std::optional<std::string> optional_string(const std::string& key);
  std::string string_or(const std::string& key, std::string fallback);
  long long integer_or(const std::string& key, long long fallback);
  double number_or(const std::string& key, double fallback);
  bool boolean_or(const std::string& key, bool fallback);
  const json& required(const std::string& key);
  const json* optional(const std::string& key);

  void finish() const;
  const std::string& context() const { return context_; }

 private:
  json object_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace stpasec
