#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "parkvision/model.hpp"

namespace pv {

struct BenchReport {
  std::string machine;
  std::vector<double> samples_s;  // per-crop latency, timed runs only
  double mean_s = 0;
  double p50_s = 0;
  double p95_s = 0;
  std::size_t stalls = 0;
  double projected_refresh_s = 0;  // mean_s * stalls
};

struct BenchOptions {
  std::size_t n = 200;  // warmup runs and timed runs each
  std::size_t stalls = 300;
  std::uint64_t seed = 0;
  std::string machine;  // empty: derived from the host CPU name
};

// Published per-crop inference times used as context in the CSV output.
struct ReferenceTiming {
  const char* machine;
  double seconds;
};
inline constexpr ReferenceTiming kReferenceTimings[] = {
    {"desktop GPU", 3.56e-4},
    {"desktop CPU", 0.0126},
    {"Raspberry Pi", 0.22},
};

// Nearest-rank percentile, q in (0, 1].
double percentile(std::vector<double> values, double q);

std::string host_machine_label();

// Times single-crop predictions (preprocessing included) on synthetic crops
// using a monotonic clock; warmup runs are discarded.
BenchReport run_bench(const Model& model, const BenchOptions& options);

// Stable CSV: '#' comment lines with reference timings, a header row and one
// data row:
//   machine,samples,mean_s,p50_s,p95_s,stalls,projected_refresh_s
void write_bench_csv(std::ostream& out, const BenchReport& report);

}  // namespace pv
