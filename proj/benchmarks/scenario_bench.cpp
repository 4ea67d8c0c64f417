#include <benchmark/benchmark.h>

#include "stpasec/control_structure.hpp"
#include "stpasec/scenario.hpp"
#include "stpasec/util.hpp"

namespace {

using namespace stpasec;

void BM_ParseScenario(benchmark::State& state) {
  const auto text = util::read_file(STPASEC_FIXTURES "/golden/worked_example_idx_dr.txt");
  const ScenarioMetadata meta{"IDx-DR v2.3", TechnologyFactor::ExternalLibraryAndDataSource,
                              "Sante DICOM Viewer Pro", "CVE-2025-5307", "attack", "h", "gpt-4o"};
  for (auto _ : state) benchmark::DoNotOptimize(parse_scenario(text, meta));
}
BENCHMARK(BM_ParseScenario);

// A chain of n components with a cross link every third hop.
ControlStructure chain(int n) {
  ControlStructure s;
  s.device_name = "chain";
  s.system_description = "synthetic";
  for (int i = 0; i < n; ++i) {
    const auto kind = i == 0 ? ComponentKind::Sensor : i == n - 1 ? ComponentKind::MLEngine : ComponentKind::Network;
    s.components.push_back({"c" + std::to_string(i), "C" + std::to_string(i), kind, ""});
  }
  for (int i = 0; i + 1 < n; ++i) s.links.push_back({"c" + std::to_string(i), "c" + std::to_string(i + 1), "wire", "data"});
  for (int i = 0; i + 3 < n; i += 3) s.links.push_back({"c" + std::to_string(i), "c" + std::to_string(i + 3), "radio", "data"});
  return s;
}

void BM_InjectionPoints(benchmark::State& state) {
  const auto s = chain(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_injection_points(s));
}
BENCHMARK(BM_InjectionPoints)->Arg(10)->Arg(100)->Arg(1000);

}  // namespace
