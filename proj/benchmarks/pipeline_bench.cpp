#include <benchmark/benchmark.h>

#include <filesystem>

#include "stpasec/pipeline.hpp"

namespace {

using namespace stpasec;

void BM_MockPipelineSuite(benchmark::State& state) {
  auto configs = load_run_configs(STPASEC_FIXTURES "/suite/run.json");
  const auto out = std::filesystem::temp_directory_path() / "stpasec-bench";
  for (auto& c : configs) c.output_dir = out;
  for (auto _ : state) {
    for (const auto& c : configs) benchmark::DoNotOptimize(run_pipeline(c));
  }
  std::filesystem::remove_all(out);
}
BENCHMARK(BM_MockPipelineSuite)->Unit(benchmark::kMillisecond);

}  // namespace
