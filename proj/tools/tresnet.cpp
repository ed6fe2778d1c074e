#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tresnet/analysis.hpp"
#include "tresnet/bench.hpp"
#include "tresnet/errors.hpp"
#include "tresnet/image.hpp"
#include "tresnet/layers.hpp"
#include "tresnet/model.hpp"
#include "tresnet/runtime.hpp"
#include "tresnet/verify.hpp"
#include "tresnet/weights.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitWeightError = 3;
constexpr int kExitInputError = 4;

struct CommonOptions {
    int threads = 0;
    std::string format = "table";
};

void apply_common(const CommonOptions& opts) {
    if (opts.threads > 0) tresnet::runtime::set_thread_count(opts.threads);
}

tresnet::ModelConfig resolve_config(const std::string& variant, const std::string& config_path) {
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw tresnet::ValidationError("cannot open config file " + config_path);
        std::stringstream buf;
        buf << in.rdbuf();
        return tresnet::ModelConfig::from_json(buf.str());
    }
    auto cfg = tresnet::ModelConfig::for_variant(variant);
    if (!cfg) {
        throw tresnet::ValidationError("unknown variant '" + variant +
                                       "' (expected m, l, xl or resnet50)");
    }
    return *cfg;
}

void check_resolution(int64_t resolution) {
    if (resolution < 32 || resolution % 32 != 0) {
        throw tresnet::ValidationError(
            "resolution " + std::to_string(resolution) +
            " is invalid: input extents must be divisible by 32 (4x stem reduction, 2x per stage)");
    }
}

int cmd_inspect(const std::string& variant, const std::string& config_path,
                const std::vector<std::string>& compare_list, int64_t resolution,
                int64_t bytes_per_element, bool no_inplace, const CommonOptions& common) {
    check_resolution(resolution);
    tresnet::CostAssumptions assumptions;
    assumptions.bytes_per_element = bytes_per_element;
    assumptions.inplace_enabled = !no_inplace;

    if (!compare_list.empty()) {
        std::vector<tresnet::Model> models;
        models.reserve(compare_list.size());
        for (const std::string& v : compare_list) models.push_back(build(resolve_config(v, ""), 0));
        std::vector<const tresnet::Model*> refs;
        for (const tresnet::Model& m : models) refs.push_back(&m);
        const auto reports = tresnet::compare(refs, resolution, assumptions);
        std::cout << (common.format == "json" ? tresnet::compare_to_json(reports)
                                              : tresnet::compare_to_text(reports));
        return kExitOk;
    }

    const tresnet::Model model = build(resolve_config(variant, config_path), 0);
    const tresnet::CostReport report = cost_report(model, 1, resolution, assumptions);
    std::cout << (common.format == "json" ? report.to_json() : report.to_text());
    if (common.format == "table") std::cout.flush();
    return kExitOk;
}

int cmd_predict(const std::string& weights_path, const std::string& image_path,
                const std::string& variant, int topk, int64_t resolution,
                const CommonOptions& common) {
    check_resolution(resolution);

    tresnet::ModelConfig cfg = [&] {
        if (!variant.empty()) return resolve_config(variant, "");
        const std::string name = tresnet::read_variant_name(weights_path);
        auto c = tresnet::ModelConfig::for_variant(name);
        if (!c) {
            throw tresnet::WeightLoadError("weight container names unknown variant '" + name +
                                           "'; pass --variant explicitly");
        }
        return *c;
    }();

    const tresnet::Model model = tresnet::load_weights(cfg, weights_path);
    const tresnet::ImageInput img = tresnet::decode_ppm(image_path);
    const tresnet::Tensor input = tresnet::preprocess_image(img, resolution);
    const tresnet::Tensor logits = forward(model, input);

    const int64_t classes = logits.dim(1);
    double max_logit = logits.at(0);
    for (int64_t k = 1; k < classes; ++k) max_logit = std::max<double>(max_logit, logits.at(0, k));
    std::vector<double> probs(static_cast<size_t>(classes));
    double denom = 0.0;
    for (int64_t k = 0; k < classes; ++k) {
        probs[static_cast<size_t>(k)] = std::exp(static_cast<double>(logits.at(0, k)) - max_logit);
        denom += probs[static_cast<size_t>(k)];
    }
    for (double& p : probs) p /= denom;

    std::vector<int64_t> order(static_cast<size_t>(classes));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&probs](int64_t a, int64_t b) {
        return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    });
    const int64_t n = std::min<int64_t>(topk, classes);

    if (common.format == "json") {
        nlohmann::json j = nlohmann::json::array();
        for (int64_t i = 0; i < n; ++i) {
            j.push_back({{"class", order[static_cast<size_t>(i)]},
                         {"score", probs[static_cast<size_t>(order[static_cast<size_t>(i)])]}});
        }
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout.precision(8);
        for (int64_t i = 0; i < n; ++i) {
            std::cout << (i + 1) << "  class " << order[static_cast<size_t>(i)] << "  "
                      << probs[static_cast<size_t>(order[static_cast<size_t>(i)])] << "\n";
        }
    }
    return kExitOk;
}

int cmd_verify(const std::string& filter) {
    std::optional<std::string> module;
    if (!filter.empty()) module = filter;
    const auto summary = tresnet::verify::run_verify(module, std::cout);
    return summary.all_passed() ? kExitOk : kExitVerifyFailure;
}

int cmd_bench(const std::vector<std::string>& subjects, const std::vector<int64_t>& batches,
              int repeats, int warmup, const CommonOptions& common) {
    tresnet::bench::BenchConfig cfg;
    cfg.subjects = subjects;
    if (!batches.empty()) cfg.batches = batches;
    cfg.threads = common.threads;
    cfg.repeats = repeats;
    cfg.warmup = warmup;
    const auto rows = tresnet::bench::run_bench(cfg);
    std::cout << (common.format == "json" ? tresnet::bench::results_to_json(rows)
                                          : tresnet::bench::results_to_text(rows));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TResNet CPU engine: inspect, predict, verify, bench"};
    app.require_subcommand(1);

    CommonOptions common;
    float corrupt_blur = 1.0f;
    app.add_option("--corrupt-blur", corrupt_blur)->group("");  // hidden test hook

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print per-layer cost report");
    std::string variant = "m", config_path;
    std::vector<std::string> compare_list;
    int64_t resolution = 224, bytes_per_element = 2;
    bool no_inplace = false;
    inspect->add_option("--variant", variant, "m | l | xl | resnet50");
    inspect->add_option("--config", config_path, "model config JSON file");
    inspect->add_option("--compare", compare_list, "compare several variants side by side")
        ->delimiter(',');
    inspect->add_option("--resolution", resolution, "input resolution (multiple of 32)");
    inspect->add_option("--bytes-per-element", bytes_per_element, "activation element width");
    inspect->add_flag("--no-inplace", no_inplace, "account activations without in-place ops");
    inspect->add_option("--format", common.format, "table | json");
    inspect->add_option("--threads", common.threads, "worker threads (default TRESNET_THREADS)");

    // predict
    auto* predict = app.add_subcommand("predict", "classify a PPM image");
    std::string weights_path, image_path, predict_variant;
    int topk = 5;
    int64_t predict_resolution = 224;
    predict->add_option("--weights", weights_path, "weight container path")->required();
    predict->add_option("--image", image_path, "PPM (P6) image path")->required();
    predict->add_option("--variant", predict_variant, "override the manifest variant");
    predict->add_option("--topk", topk, "number of classes to print");
    predict->add_option("--resolution", predict_resolution, "inference resolution");
    predict->add_option("--format", common.format, "table | json");
    predict->add_option("--threads", common.threads, "worker threads");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run every registered invariant");
    std::string filter;
    verify_cmd->add_option("--filter", filter,
                           "tensor | layers | model | gradcheck | analysis | cli");
    verify_cmd->add_option("--threads", common.threads, "worker threads");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "wall-clock micro-benchmarks");
    std::vector<std::string> subjects;
    std::vector<int64_t> batches;
    int repeats = 5, warmup = 1;
    bench_cmd->add_option("--subjects", subjects, "comma-separated bench subjects")
        ->delimiter(',')
        ->required();
    bench_cmd->add_option("--batches", batches, "batch sizes (default 1)")->delimiter(',');
    bench_cmd->add_option("--repeats", repeats, "timed repeats per subject (>= 3)");
    bench_cmd->add_option("--warmup", warmup, "untimed warmup runs");
    bench_cmd->add_option("--format", common.format, "table | json");
    bench_cmd->add_option("--threads", common.threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << "\n";
        return kExitUsage;
    }

    if (common.format != "table" && common.format != "json") {
        std::cerr << "unknown --format '" << common.format << "' (expected table or json)\n";
        return kExitUsage;
    }
    if (corrupt_blur != 1.0f) tresnet::testhook::set_blur_kernel_scale(corrupt_blur);
    apply_common(common);

    try {
        if (inspect->parsed()) {
            return cmd_inspect(variant, config_path, compare_list, resolution, bytes_per_element,
                               no_inplace, common);
        }
        if (predict->parsed()) {
            return cmd_predict(weights_path, image_path, predict_variant, topk, predict_resolution,
                               common);
        }
        if (verify_cmd->parsed()) return cmd_verify(filter);
        if (bench_cmd->parsed()) {
            return cmd_bench(subjects, batches, repeats, warmup, common);
        }
    } catch (const tresnet::WeightFormatError& e) {
        std::cerr << "weight error: " << e.what() << "\n";
        return kExitWeightError;
    } catch (const tresnet::WeightLoadError& e) {
        std::cerr << "weight error: " << e.what() << "\n";
        return kExitWeightError;
    } catch (const tresnet::ImageError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const tresnet::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const tresnet::DimensionError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}
