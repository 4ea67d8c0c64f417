#include "stpasec/document.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <regex>

#include "stpasec/error.hpp"
#include "stpasec/util.hpp"

namespace stpasec {

namespace {

json scalar_to_json(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  // Quoted or explicitly tagged scalars keep their text.
  if (node.Tag() == "!" || node.Tag() == "tag:yaml.org,2002:str") return text;

  static const std::regex kNull("^(~|null|Null|NULL|)$");
  static const std::regex kTrue("^(true|True|TRUE)$");
  static const std::regex kFalse("^(false|False|FALSE)$");
  static const std::regex kInt("^[-+]?[0-9]+$");
  static const std::regex kFloat("^[-+]?(\\.[0-9]+|[0-9]+(\\.[0-9]*)?)([eE][-+]?[0-9]+)?$");

  if (std::regex_match(text, kNull)) return nullptr;
  if (std::regex_match(text, kTrue)) return true;
  if (std::regex_match(text, kFalse)) return false;
  if (std::regex_match(text, kInt)) {
    try {
      return std::stoll(text);
    } catch (const std::out_of_range&) {
      return text;
    }
  }
  if (std::regex_match(text, kFloat)) return std::strtod(text.c_str(), nullptr);
  return text;
}

json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& child : node) arr.push_back(node_to_json(child));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

std::string describe_type(const json& j) { return j.type_name(); }

}  // namespace

json yaml_to_json(const std::string& text) {
  try {
    return node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("invalid YAML: ") + e.what());
  }
}

json load_document(const std::filesystem::path& path) {
  const std::string text = util::read_file(path.string());
  const auto ext = util::to_lower(path.extension().string());
  if (ext == ".yaml" || ext == ".yml") {
    try {
      return yaml_to_json(text);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

FieldReader::FieldReader(const json& object, std::string context)
    : object_(object), context_(std::move(context)) {
  if (!object_.is_object()) {
    throw ConfigError(context_ + ": expected an object, got " + describe_type(object_));
  }
}

const json* FieldReader::optional(const std::string& key) {
  seen_.insert(key);
  auto it = object_.find(key);
  if (it == object_.end() || it->is_null()) return nullptr;
  return &*it;
}

const json& FieldReader::required(const std::string& key) {
  const json* j = optional(key);
  if (!j) throw ConfigError(context_ + ": missing required key '" + key + "'");
  return *j;
}

std::string FieldReader::required_string(const std::string& key) {
  const json& j = required(key);
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number()) return j.dump();
  throw ConfigError(context_ + ": key '" + key + "' must be a string, got " + describe_type(j));
}

std::optional<std::string> FieldReader::optional_string(const std::string& key) {
  if (!optional(key)) return std::nullopt;
  return required_string(key);
}

std::string FieldReader::string_or(const std::string& key, std::string fallback) {
  auto v = optional_string(key);
  return v ? *v : std::move(fallback);
}

long long FieldReader::integer_or(const std::string& key, long long fallback) {
  const json* j = optional(key);
  if (!j) return fallback;
  if (!j->is_number_integer()) {
    throw ConfigError(context_ + ": key '" + key + "' must be an integer, got " + describe_type(*j));
  }
  return j->get<long long>();
}

double FieldReader::number_or(const std::string& key, double fallback) {
  const json* j = optional(key);
  if (!j) return fallback;
  if (!j->is_number()) {
    throw ConfigError(context_ + ": key '" + key + "' must be a number, got " + describe_type(*j));
  }
  return j->get<double>();
}

bool FieldReader::boolean_or(const std::string& key, bool fallback) {
  const json* j = optional(key);
  if (!j) return fallback;
  if (!j->is_boolean()) {
    throw ConfigError(context_ + ": key '" + key + "' must be a boolean, got " + describe_type(*j));
  }
  return j->get<bool>();
}

void FieldReader::finish() const {
  for (const auto& [key, value] : object_.items()) {
    if (!seen_.count(key)) throw ConfigError(context_ + ": unknown key '" + key + "'");
  }
}

}  // namespace stpasec
