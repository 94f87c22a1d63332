#include "parkvision/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "parkvision/dataset.hpp"
#include "parkvision/errors.hpp"

namespace pv {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw ValidationError(fmt::format("percentile rank {} is outside (0, 1]", q));
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

std::string host_machine_label() {
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto first = line.find_first_not_of(" \t", colon + 1);
        if (first != std::string::npos) return line.substr(first);
      }
    }
  }
  return "unknown CPU";
}

BenchReport run_bench(const Model& model, const BenchOptions& options) {
  if (options.n == 0) throw ValidationError("bench needs at least one timed run");
  std::vector<Image> crops;
  crops.reserve(options.n);
  for (std::size_t i = 0; i < options.n; ++i) {
    const Occupancy label = i % 2 == 0 ? Occupancy::kOccupied : Occupancy::kVacant;
    const std::size_t w = 48 + (i * 7) % 25;
    const std::size_t h = 48 + (i * 11) % 25;
    crops.push_back(synth_crop(label, options.seed, i, w, h));
  }

  volatile double sink = 0;
  for (const auto& crop : crops) sink = sink + predict_image(model, crop).occupied_prob;

  BenchReport report;
  report.machine = options.machine.empty() ? host_machine_label() : options.machine;
  report.samples_s.reserve(crops.size());
  for (const auto& crop : crops) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + predict_image(model, crop).occupied_prob;
    const auto t1 = std::chrono::steady_clock::now();
    report.samples_s.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  report.mean_s =
      std::accumulate(report.samples_s.begin(), report.samples_s.end(), 0.0) / static_cast<double>(report.samples_s.size());
  report.p50_s = percentile(report.samples_s, 0.50);
  report.p95_s = percentile(report.samples_s, 0.95);
  report.stalls = options.stalls;
  report.projected_refresh_s = report.mean_s * static_cast<double>(options.stalls);
  return report;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
  for (const auto& ref : kReferenceTimings) {
    fmt::print(out, "# reference per-crop time, {}: {} s (not measured here)\n", ref.machine, ref.seconds);
  }
  fmt::print(out, "machine,samples,mean_s,p50_s,p95_s,stalls,projected_refresh_s\n");
  fmt::print(out, "{},{},{:.9g},{:.9g},{:.9g},{},{:.9g}\n", csv_field(report.machine), report.samples_s.size(),
             report.mean_s, report.p50_s, report.p95_s, report.stalls, report.projected_refresh_s);
}

}  // namespace pv
