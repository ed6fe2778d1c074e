#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tresnet/tensor.hpp"

namespace tresnet::bench {

/// Wall-clock micro-benchmark result for one (subject, batch) pair.
/// Comparisons are only meaningful as ratios between subjects of the
/// same run; absolute numbers depend on the machine fingerprint.
struct BenchResult {
    std::string subject;
    int64_t batch = 1;
    int threads = 1;
    int repeats = 3;
    int warmup = 1;
    double images_per_second = 0.0;
    double p50_latency_ms = 0.0;
    double p95_latency_ms = 0.0;
    int64_t peak_estimated_bytes = 0;
};

struct BenchConfig {
    std::vector<std::string> subjects;
    std::vector<int64_t> batches = {1};
    int threads = 0;   // 0: keep current runtime setting
    int repeats = 5;   // must be >= 3
    int warmup = 1;
};

/// Known subjects: model variants (m, l, xl, resnet50, m-noinplace),
/// gap-fast / gap-generic, stem-s2d / stem-conv7x7, and block ablation
/// toggles (block-basic-aa, block-basic-noaa, block-bottleneck-se,
/// block-bottleneck-nose).
const std::vector<std::string>& known_subjects();

/// Runs subjects one at a time (no interleaving); returns exactly
/// subjects.size() * batches.size() rows in argument order. Throws
/// ValidationError for unknown subjects or repeats < 3.
std::vector<BenchResult> run_bench(const BenchConfig& config);

std::string results_to_text(const std::vector<BenchResult>& rows);
std::string results_to_json(const std::vector<BenchResult>& rows);

}  // namespace tresnet::bench
