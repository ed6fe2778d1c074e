#include "tresnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tresnet/analysis.hpp"
#include "tresnet/errors.hpp"
#include "tresnet/layers.hpp"
#include "tresnet/model.hpp"
#include "tresnet/ops.hpp"
#include "tresnet/runtime.hpp"

namespace tresnet::bench {

namespace {

volatile float g_sink = 0.0f;  // defeats dead-code elimination of timed work

Tensor random_tensor(std::vector<int64_t> dims, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    Tensor t(std::move(dims));
    std::mt19937_64 eng(seed);
    const float span = hi - lo;
    for (float& v : t.values()) {
        v = lo + span * static_cast<float>(eng() >> 40) / static_cast<float>(1 << 24);
    }
    return t;
}

struct Runner {
    std::function<void()> run;
    int64_t peak_bytes = 0;
};

constexpr uint64_t kBenchSeed = 42;

Runner make_model_runner(const ModelConfig& cfg, int64_t batch, bool inplace) {
    auto model = std::make_shared<Model>(build(cfg, kBenchSeed));
    auto input = std::make_shared<Tensor>(random_tensor({batch, 3, 224, 224}, kBenchSeed + 1));
    Runner r;
    r.peak_bytes = estimate_activation_memory(*model, batch, 224, inplace, /*training=*/false,
                                              /*bytes_per_element=*/4);
    r.run = [model, input, inplace] {
        Tensor out = forward(*model, *input, ForwardOptions{inplace});
        g_sink = g_sink + out.at(0);
    };
    return r;
}

Runner make_stem_runner(const ModelConfig& cfg, int64_t batch) {
    auto model = std::make_shared<Model>(build(cfg, kBenchSeed));
    auto input = std::make_shared<Tensor>(random_tensor({batch, 3, 224, 224}, kBenchSeed + 1));
    Runner r;
    const int64_t ch = cfg.stem_conv_channels;
    r.peak_bytes = (batch * 3 * 224 * 224 + batch * ch * 56 * 56) * 4;
    r.run = [model, input] {
        Tensor out = forward_stem(*model, *input);
        g_sink = g_sink + out.at(0);
    };
    return r;
}

Runner make_gap_runner(int64_t batch, bool fast) {
    auto input = std::make_shared<Tensor>(random_tensor({batch, 2048, 7, 7}, kBenchSeed + 2,
                                                        -1.0f, 1.0f));
    Runner r;
    r.peak_bytes = (input->numel() + batch * 2048) * 4;
    if (fast) {
        r.run = [input] {
            Tensor out = fast_gap(*input, /*flatten=*/false);
            g_sink = g_sink + out.at(0);
        };
    } else {
        r.run = [input] {
            Tensor out = avg_pool2d(*input, 7, 7);
            g_sink = g_sink + out.at(0);
        };
    }
    return r;
}

Runner make_block_runner(BlockKind kind, bool use_se, bool use_aa, int64_t batch) {
    const bool basic = kind == BlockKind::kBasic;
    const int64_t in_ch = basic ? 64 : 1024;
    const int64_t out_ch = basic ? 128 : 1024;
    const int64_t stride = basic ? 2 : 1;
    const int64_t res = basic ? 56 : 14;
    auto params = std::make_shared<BlockParams>(
        make_block_params(kind, in_ch, out_ch, stride, use_se, use_aa, 0.01f, kBenchSeed));
    auto input = std::make_shared<Tensor>(
        random_tensor({batch, in_ch, res, res}, kBenchSeed + 3, -1.0f, 1.0f));
    Runner r;
    r.peak_bytes = (input->numel() + batch * out_ch * (res / stride) * (res / stride)) * 4;
    r.run = [params, input] {
        Tensor out = run_block(*input, *params);
        g_sink = g_sink + out.at(0);
    };
    return r;
}

Runner make_runner(const std::string& subject, int64_t batch) {
    if (subject == "m") return make_model_runner(ModelConfig::tresnet_m(), batch, true);
    if (subject == "m-noinplace") return make_model_runner(ModelConfig::tresnet_m(), batch, false);
    if (subject == "l") return make_model_runner(ModelConfig::tresnet_l(), batch, true);
    if (subject == "xl") return make_model_runner(ModelConfig::tresnet_xl(), batch, true);
    if (subject == "resnet50") return make_model_runner(ModelConfig::resnet50(), batch, true);
    if (subject == "gap-fast") return make_gap_runner(batch, true);
    if (subject == "gap-generic") return make_gap_runner(batch, false);
    if (subject == "stem-s2d") return make_stem_runner(ModelConfig::tresnet_m(), batch);
    if (subject == "stem-conv7x7") return make_stem_runner(ModelConfig::resnet50(), batch);
    if (subject == "block-basic-aa") return make_block_runner(BlockKind::kBasic, true, true, batch);
    if (subject == "block-basic-noaa") {
        return make_block_runner(BlockKind::kBasic, true, false, batch);
    }
    if (subject == "block-bottleneck-se") {
        return make_block_runner(BlockKind::kBottleneck, true, true, batch);
    }
    if (subject == "block-bottleneck-nose") {
        return make_block_runner(BlockKind::kBottleneck, false, true, batch);
    }
    throw ValidationError("unknown bench subject '" + subject + "'");
}

double percentile_ms(std::vector<double> sorted, double q) {
    // nearest-rank on an already sorted sample
    const size_t n = sorted.size();
    const size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
    return sorted[std::min(n - 1, std::max<size_t>(1, rank) - 1)];
}

}  // namespace

const std::vector<std::string>& known_subjects() {
    static const std::vector<std::string> subjects = {
        "m",       "l",        "xl",           "resnet50",         "m-noinplace",
        "gap-fast", "gap-generic", "stem-s2d",  "stem-conv7x7",     "block-basic-aa",
        "block-basic-noaa", "block-bottleneck-se", "block-bottleneck-nose"};
    return subjects;
}

std::vector<BenchResult> run_bench(const BenchConfig& config) {
    if (config.repeats < 3) throw ValidationError("bench repeats must be >= 3");
    if (config.warmup < 0) throw ValidationError("bench warmup must be >= 0");
    if (config.subjects.empty()) throw ValidationError("bench needs at least one subject");
    for (const std::string& s : config.subjects) {
        const auto& known = known_subjects();
        if (std::find(known.begin(), known.end(), s) == known.end()) {
            throw ValidationError("unknown bench subject '" + s + "'");
        }
    }
    for (int64_t b : config.batches) {
        if (b < 1) throw ValidationError("bench batch sizes must be >= 1");
    }

    const int previous_threads = runtime::thread_count();
    if (config.threads > 0) runtime::set_thread_count(config.threads);
    const int threads = runtime::thread_count();

    std::vector<BenchResult> results;
    results.reserve(config.subjects.size() * config.batches.size());
    for (const std::string& subject : config.subjects) {
        for (int64_t batch : config.batches) {
            Runner runner = make_runner(subject, batch);
            for (int i = 0; i < config.warmup; ++i) runner.run();

            std::vector<double> latencies_ms;
            latencies_ms.reserve(static_cast<size_t>(config.repeats));
            double total_seconds = 0.0;
            for (int i = 0; i < config.repeats; ++i) {
                const auto start = std::chrono::steady_clock::now();
                runner.run();
                const auto stop = std::chrono::steady_clock::now();
                const double sec = std::chrono::duration<double>(stop - start).count();
                total_seconds += sec;
                latencies_ms.push_back(sec * 1e3);
            }
            std::sort(latencies_ms.begin(), latencies_ms.end());

            BenchResult r;
            r.subject = subject;
            r.batch = batch;
            r.threads = threads;
            r.repeats = config.repeats;
            r.warmup = config.warmup;
            r.images_per_second =
                static_cast<double>(batch * config.repeats) / std::max(total_seconds, 1e-12);
            r.p50_latency_ms = percentile_ms(latencies_ms, 0.50);
            r.p95_latency_ms = percentile_ms(latencies_ms, 0.95);
            r.peak_estimated_bytes = runner.peak_bytes;
            results.push_back(std::move(r));
        }
    }

    if (config.threads > 0) runtime::set_thread_count(previous_threads);
    return results;
}

std::string results_to_text(const std::vector<BenchResult>& rows) {
    std::ostringstream os;
    os << "machine: " << (rows.empty() ? 0 : rows.front().threads)
       << " threads, float32 elements; compare subjects within this run only\n";
    os << std::left << std::setw(24) << "subject" << std::right << std::setw(7) << "batch"
       << std::setw(9) << "threads" << std::setw(9) << "repeats" << std::setw(8) << "warmup"
       << std::setw(13) << "img/sec" << std::setw(11) << "p50_ms" << std::setw(11) << "p95_ms"
       << std::setw(14) << "peak_bytes" << "\n";
    os << std::fixed;
    for (const BenchResult& r : rows) {
        os << std::left << std::setw(24) << r.subject << std::right << std::setw(7) << r.batch
           << std::setw(9) << r.threads << std::setw(9) << r.repeats << std::setw(8) << r.warmup
           << std::setw(13) << std::setprecision(2) << r.images_per_second << std::setw(11)
           << std::setprecision(3) << r.p50_latency_ms << std::setw(11) << r.p95_latency_ms
           << std::setw(14) << r.peak_estimated_bytes << "\n";
    }
    return os.str();
}

std::string results_to_json(const std::vector<BenchResult>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const BenchResult& r : rows) {
        j.push_back({{"subject", r.subject},
                     {"batch", r.batch},
                     {"threads", r.threads},
                     {"repeats", r.repeats},
                     {"warmup", r.warmup},
                     {"images_per_second", r.images_per_second},
                     {"p50_latency_ms", r.p50_latency_ms},
                     {"p95_latency_ms", r.p95_latency_ms},
                     {"peak_estimated_bytes", r.peak_estimated_bytes}});
    }
    return j.dump(2);
}

}  // namespace tresnet::bench
