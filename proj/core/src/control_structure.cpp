#include "stpasec/control_structure.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <queue>
#include <set>
#include <tuple>

#include "stpasec/error.hpp"
#include "stpasec/util.hpp"

namespace stpasec {

namespace {

constexpr std::array<std::pair<ComponentKind, std::string_view>, 8> kKindNames = {{
    {ComponentKind::Sensor, "Sensor"},
    {ComponentKind::Interface, "Interface"},
    {ComponentKind::MLEngine, "MLEngine"},
    {ComponentKind::Actuator, "Actuator"},
    {ComponentKind::Network, "Network"},
    {ComponentKind::Human, "Human"},
    {ComponentKind::Datastore, "Datastore"},
    {ComponentKind::Other, "Other"},
}};

using Adjacency = std::map<std::string, std::set<std::string>>;

Adjacency forward_adjacency(const ControlStructure& s) {
  Adjacency adj;
  for (const auto& c : s.components) adj[c.id];
  for (const auto& l : s.links) adj[l.from].insert(l.to);
  return adj;
}

Adjacency reverse_adjacency(const ControlStructure& s) {
  Adjacency adj;
  for (const auto& c : s.components) adj[c.id];
  for (const auto& l : s.links) adj[l.to].insert(l.from);
  return adj;
}

// Hop distance from every component to `target` along link direction.
std::map<std::string, int> distances_to(const ControlStructure& s, const std::string& target) {
  const auto rev = reverse_adjacency(s);
  std::map<std::string, int> dist{{target, 0}};
  std::deque<std::string> queue{target};
  while (!queue.empty()) {
    const auto cur = queue.front();
    queue.pop_front();
    auto it = rev.find(cur);
    if (it == rev.end()) continue;
    for (const auto& prev : it->second) {
      if (dist.emplace(prev, dist[cur] + 1).second) queue.push_back(prev);
    }
  }
  return dist;
}

// Kahn's algorithm with smallest-id-first tie-breaking; nullopt on a cycle.
std::optional<std::map<std::string, std::size_t>> topological_rank(const ControlStructure& s) {
  const auto adj = forward_adjacency(s);
  std::map<std::string, int> indegree;
  for (const auto& [id, succ] : adj) indegree.emplace(id, 0);
  for (const auto& [id, succ] : adj) {
    for (const auto& t : succ) ++indegree[t];
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push(id);
  }
  std::map<std::string, std::size_t> rank;
  while (!ready.empty()) {
    const auto cur = ready.top();
    ready.pop();
    rank.emplace(cur, rank.size());
    auto it = adj.find(cur);
    if (it == adj.end()) continue;
    for (const auto& t : it->second) {
      if (--indegree[t] == 0) ready.push(t);
    }
  }
  if (rank.size() != indegree.size()) return std::nullopt;
  return rank;
}

}  // namespace

std::string_view to_string(ComponentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "Other";
}

std::optional<ComponentKind> parse_component_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (util::iequals(name, text)) return k;
  }
  return std::nullopt;
}

const Component* ControlStructure::find(std::string_view id) const {
  for (const auto& c : components) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

const Component* ControlStructure::ml_engine() const {
  const Component* found = nullptr;
  for (const auto& c : components) {
    if (c.kind != ComponentKind::MLEngine) continue;
    if (found) return nullptr;
    found = &c;
  }
  return found;
}

std::vector<std::string> validate_structure(const ControlStructure& s) {
  std::vector<std::string> violations;

  std::set<std::string> ids;
  for (const auto& c : s.components) {
    if (c.id.empty()) {
      violations.push_back("component '" + c.name + "' has an empty id");
    } else if (!ids.insert(c.id).second) {
      violations.push_back("duplicate component id '" + c.id + "'");
    }
  }

  std::vector<std::string> engines;
  for (const auto& c : s.components) {
    if (c.kind == ComponentKind::MLEngine) engines.push_back(c.id);
  }
  if (engines.empty()) {
    violations.push_back("expected exactly one MLEngine component, found none");
  } else if (engines.size() > 1) {
    std::string list;
    for (const auto& id : engines) list += (list.empty() ? "'" : ", '") + id + "'";
    violations.push_back("expected exactly one MLEngine component, found " + std::to_string(engines.size()) +
                         ": " + list);
  }

  bool dangling = false;
  std::set<std::tuple<std::string, std::string, std::string>> triples;
  for (const auto& l : s.links) {
    const std::string label = "link '" + l.from + "' -> '" + l.to + "'";
    if (l.from == l.to) violations.push_back(label + " is a self-loop");
    for (const auto* end : {&l.from, &l.to}) {
      if (!ids.count(*end)) {
        violations.push_back(label + " references unknown component '" + *end + "'");
        dangling = true;
      }
    }
    if (!triples.emplace(l.from, l.to, l.carries).second) {
      violations.push_back("duplicate " + label + " carrying '" + l.carries + "'");
    }
  }

  if (engines.size() == 1 && !dangling && s.components.size() > 1) {
    const auto dist = distances_to(s, engines.front());
    if (dist.size() <= 1) {
      violations.push_back("no component has a directed path to the MLEngine '" + engines.front() + "'");
    }
  }
  return violations;
}

std::vector<InjectionPoint> enumerate_injection_points(const ControlStructure& s) {
  const auto violations = validate_structure(s);
  if (!violations.empty()) {
    throw PreconditionError("invalid control structure: " + violations.front());
  }
  const std::string ml = s.ml_engine()->id;
  const auto dist = distances_to(s, ml);
  const auto adj = forward_adjacency(s);

  std::vector<InjectionPoint> points;
  for (const auto& [id, d] : dist) {  // std::map: ascending id order
    if (id == ml) continue;
    InjectionPoint p{id, {id}};
    std::string cur = id;
    while (cur != ml) {
      const int want = dist.at(cur) - 1;
      for (const auto& next : adj.at(cur)) {  // ascending id order
        auto it = dist.find(next);
        if (it != dist.end() && it->second == want) {
          cur = next;
          break;
        }
      }
      p.path_to_ml.push_back(cur);
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::string derive_data_flow(const ControlStructure& s) {
  std::vector<const DataLink*> links;
  for (const auto& l : s.links) links.push_back(&l);

  const auto rank = topological_rank(s);
  if (rank && std::all_of(links.begin(), links.end(), [&](const DataLink* l) {
        return rank->count(l->from) && rank->count(l->to);
      })) {
    std::stable_sort(links.begin(), links.end(), [&](const DataLink* a, const DataLink* b) {
      return std::tie(rank->at(a->from), rank->at(a->to), a->carries, a->medium) <
             std::tie(rank->at(b->from), rank->at(b->to), b->carries, b->medium);
    });
  } else {
    std::stable_sort(links.begin(), links.end(), [](const DataLink* a, const DataLink* b) {
      return std::tie(a->from, a->to, a->carries, a->medium) < std::tie(b->from, b->to, b->carries, b->medium);
    });
  }

  auto label = [&](const std::string& id) {
    const Component* c = s.find(id);
    return (c && !c->name.empty()) ? c->name : id;
  };

  std::string out;
  for (const DataLink* l : links) {
    if (!out.empty()) out += "; ";
    out += label(l->from) + " → " + label(l->to);
    if (!l->carries.empty()) out += " (" + l->carries + ")";
    if (!l->medium.empty()) out += " via " + l->medium;
  }
  return out;
}

ControlStructure control_structure_from_json(const json& doc) {
  FieldReader top(doc, "control structure");
  ControlStructure s;
  s.device_name = top.required_string("device_name");
  s.system_description = top.string_or("system_description", "");

  if (const json* comps = top.optional("components")) {
    if (!comps->is_array()) throw ConfigError("control structure: 'components' must be a list");
    for (std::size_t i = 0; i < comps->size(); ++i) {
      FieldReader r((*comps)[i], "control structure: components[" + std::to_string(i) + "]");
      Component c;
      c.id = r.required_string("id");
      c.name = r.string_or("name", c.id);
      const auto kind_text = r.required_string("kind");
      const auto kind = parse_component_kind(kind_text);
      if (!kind) throw ConfigError(r.context() + ": unknown component kind '" + kind_text + "'");
      c.kind = *kind;
      c.description = r.string_or("description", "");
      r.finish();
      s.components.push_back(std::move(c));
    }
  }
  if (const json* links = top.optional("links")) {
    if (!links->is_array()) throw ConfigError("control structure: 'links' must be a list");
    for (std::size_t i = 0; i < links->size(); ++i) {
      FieldReader r((*links)[i], "control structure: links[" + std::to_string(i) + "]");
      DataLink l;
      l.from = r.required_string("from");
      l.to = r.required_string("to");
      l.medium = r.string_or("medium", "");
      l.carries = r.string_or("carries", "");
      r.finish();
      s.links.push_back(std::move(l));
    }
  }
  top.finish();
  return s;
}

json to_json(const ControlStructure& s) {
  json comps = json::array();
  for (const auto& c : s.components) {
    comps.push_back({{"id", c.id}, {"name", c.name}, {"kind", to_string(c.kind)}, {"description", c.description}});
  }
  json links = json::array();
  for (const auto& l : s.links) {
    links.push_back({{"from", l.from}, {"to", l.to}, {"medium", l.medium}, {"carries", l.carries}});
  }
  return {{"device_name", s.device_name},
          {"system_description", s.system_description},
          {"components", comps},
          {"links", links}};
}

ControlStructure load_control_structure(const std::filesystem::path& path) {
  try {
    return control_structure_from_json(load_document(path));
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw ConfigError(path.string() + ": " + what);
  }
}

}  // namespace stpasec
