#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stpasec/document.hpp"

namespace stpasec {

enum class ComponentKind { Sensor, Interface, MLEngine, Actuator, Network, Human, Datastore, Other };

std::string_view to_string(ComponentKind kind);
std::optional<ComponentKind> parse_component_kind(std::string_view text);

struct Component {
  std::string id;
  std::string name;
  ComponentKind kind = ComponentKind::Other;
  std::string description;

  bool operator==(const Component&) const = default;
};

struct DataLink {
  std::string from;
  std::string to;
  std::string medium;
  std::string carries;

  bool operator==(const DataLink&) const = default;
};

// The device's control structure: components and the directed data/control
// links between them. Cycles are allowed.
struct ControlStructure {
  std::string device_name;
  std::string system_description;
  std::vector<Component> components;
  std::vector<DataLink> links;

  const Component* find(std::string_view id) const;
  // The unique MLEngine component, or nullptr when there is not exactly one.
  const Component* ml_engine() const;

  bool operator==(const ControlStructure&) const = default;
};

// A component from which manipulated data can reach the ML engine.
struct InjectionPoint {
  std::string component;
  std::vector<std::string> path_to_ml;  // starts at `component`, ends at the ML engine

  bool operator==(const InjectionPoint&) const = default;
};

// Returns one human-readable line per violated invariant; empty iff valid.
std::vector<std::string> validate_structure(const ControlStructure& s);

// One point per non-ML component with a directed path to the ML engine,
// ordered by component id. Each path is a shortest path; ties go to the
// lexicographically smallest id sequence. Throws PreconditionError when
// the structure is invalid.
std::vector<InjectionPoint> enumerate_injection_points(const ControlStructure& s);

// Deterministic "A → B (carries) via medium; ..." description of every link.
// Links follow topological order when the graph is acyclic, otherwise they
// are sorted by (from, to).
std::string derive_data_flow(const ControlStructure& s);

ControlStructure control_structure_from_json(const json& doc);
json to_json(const ControlStructure& s);
ControlStructure load_control_structure(const std::filesystem::path& path);

}  // namespace stpasec
