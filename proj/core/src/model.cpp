#include "tresnet/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tresnet/errors.hpp"
#include "tresnet/ops.hpp"

namespace tresnet {

namespace {

/// Box-Muller over a fixed 64-bit engine so builds are bit-reproducible
/// across standard libraries.
class InitRng {
public:
    explicit InitRng(uint64_t seed) : eng_(seed) {}

    float normal(double stddev) {
        if (have_spare_) {
            have_spare_ = false;
            return static_cast<float>(spare_ * stddev);
        }
        const double u1 = 1.0 - uniform();  // (0,1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return static_cast<float>(radius * std::cos(angle) * stddev);
    }

private:
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct Builder {
    InitRng rng;
    float slope;
    bool use_aa;

    Tensor normal_tensor(std::vector<int64_t> dims, int64_t fan_out) {
        Tensor t(std::move(dims));
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_out));
        for (float& v : t.values()) v = rng.normal(stddev);
        return t;
    }

    ConvParams conv(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad) {
        ConvParams p;
        p.weight = normal_tensor({cout, cin, k, k}, cout * k * k);
        p.stride = stride;
        p.padding = pad;
        return p;
    }

    IabnParams iabn(int64_t c, float act_slope, bool zero_gamma = false) {
        IabnParams p;
        p.gamma = Tensor::full({c}, zero_gamma ? 0.0f : 1.0f);
        p.beta = Tensor({c});
        p.running_mean = Tensor({c});
        p.running_var = Tensor::full({c}, 1.0f);
        p.slope = act_slope;
        return p;
    }

    SeParams se(int64_t c, int64_t reduction) {
        const int64_t c_red =
            std::max<int64_t>(1, static_cast<int64_t>(std::floor(
                                     static_cast<double>(c) / static_cast<double>(reduction) + 0.5)));
        SeParams p;
        p.w_reduce = normal_tensor({c_red, c}, c_red);
        p.b_reduce = Tensor({c_red});
        p.w_expand = normal_tensor({c, c_red}, c);
        p.b_expand = Tensor({c});
        p.reduction = reduction;
        return p;
    }

    BlockParams block(BlockKind kind, int64_t in_ch, int64_t out_ch, int64_t stride, bool use_se) {
        BlockParams p;
        p.kind = kind;
        p.stride = stride;
        p.use_aa = use_aa;
        p.slope = slope;
        const bool aa_here = use_aa && stride == 2;
        if (kind == BlockKind::kBasic) {
            p.conv1 = conv(in_ch, out_ch, 3, aa_here ? 1 : stride, 1);
            p.iabn1 = iabn(out_ch, slope);
            p.conv2 = conv(out_ch, out_ch, 3, 1, 1);
            p.iabn2 = iabn(out_ch, 1.0f, /*zero_gamma=*/true);
            if (use_se) p.se = se(out_ch, 4);
        } else {
            const int64_t planes = out_ch / 4;
            p.conv1 = conv(in_ch, planes, 1, 1, 0);
            p.iabn1 = iabn(planes, slope);
            p.conv2 = conv(planes, planes, 3, aa_here ? 1 : stride, 1);
            p.iabn2 = iabn(planes, slope);
            if (use_se) p.se = se(planes, 8);
            p.conv3 = conv(planes, out_ch, 1, 1, 0);
            p.iabn3 = iabn(out_ch, 1.0f, /*zero_gamma=*/true);
        }
        if (stride == 2 || in_ch != out_ch) {
            DownsampleParams ds;
            ds.conv = conv(in_ch, out_ch, 1, stride, 0);
            ds.iabn = iabn(out_ch, 1.0f);
            p.downsample = ds;
        }
        return p;
    }
};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

ModelConfig tresnet_variant(const char* name, int64_t stem, std::array<StageSpec, 4> stages,
                            int64_t num_classes) {
    ModelConfig cfg;
    cfg.variant_name = name;
    cfg.stem_conv_channels = stem;
    cfg.stages = stages;
    cfg.num_classes = num_classes;
    return cfg;
}

}  // namespace

ModelConfig ModelConfig::tresnet_m(int64_t num_classes) {
    return tresnet_variant("tresnet-m", 64,
                           {StageSpec{BlockKind::kBasic, 3, 64, 1, true},
                            StageSpec{BlockKind::kBasic, 4, 128, 2, true},
                            StageSpec{BlockKind::kBottleneck, 11, 1024, 2, true},
                            StageSpec{BlockKind::kBottleneck, 3, 2048, 2, false}},
                           num_classes);
}

ModelConfig ModelConfig::tresnet_l(int64_t num_classes) {
    return tresnet_variant("tresnet-l", 76,
                           {StageSpec{BlockKind::kBasic, 4, 76, 1, true},
                            StageSpec{BlockKind::kBasic, 5, 152, 2, true},
                            StageSpec{BlockKind::kBottleneck, 18, 1216, 2, true},
                            StageSpec{BlockKind::kBottleneck, 3, 2432, 2, false}},
                           num_classes);
}

ModelConfig ModelConfig::tresnet_xl(int64_t num_classes) {
    return tresnet_variant("tresnet-xl", 84,
                           {StageSpec{BlockKind::kBasic, 4, 84, 1, true},
                            StageSpec{BlockKind::kBasic, 5, 168, 2, true},
                            StageSpec{BlockKind::kBottleneck, 24, 1344, 2, true},
                            StageSpec{BlockKind::kBottleneck, 3, 2688, 2, false}},
                           num_classes);
}

ModelConfig ModelConfig::resnet50(int64_t num_classes) {
    ModelConfig cfg;
    cfg.variant_name = "resnet50";
    cfg.stem_kind = StemKind::kConv7x7;
    cfg.stem_conv_channels = 64;
    cfg.stages = {StageSpec{BlockKind::kBottleneck, 3, 256, 1, false},
                  StageSpec{BlockKind::kBottleneck, 4, 512, 2, false},
                  StageSpec{BlockKind::kBottleneck, 6, 1024, 2, false},
                  StageSpec{BlockKind::kBottleneck, 3, 2048, 2, false}};
    cfg.num_classes = num_classes;
    cfg.leaky_slope = 0.0f;
    cfg.use_aa = false;
    return cfg;
}

std::optional<ModelConfig> ModelConfig::for_variant(std::string_view name, int64_t num_classes) {
    const std::string key = lower(name);
    if (key == "m" || key == "tresnet-m") return tresnet_m(num_classes);
    if (key == "l" || key == "tresnet-l") return tresnet_l(num_classes);
    if (key == "xl" || key == "tresnet-xl") return tresnet_xl(num_classes);
    if (key == "resnet50") return resnet50(num_classes);
    return std::nullopt;
}

void ModelConfig::validate() const {
    std::vector<std::string> violations;
    if (stem_conv_channels < 1) violations.push_back("stem_conv_channels must be >= 1");
    if (num_classes < 1) violations.push_back("num_classes must be >= 1");
    if (leaky_slope < 0.0f) violations.push_back("leaky_slope must be >= 0");
    for (size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& s = stages[i];
        const std::string tag = "stage" + std::to_string(i + 1);
        if (s.repeats < 1) violations.push_back(tag + ".repeats must be >= 1");
        if (s.out_channels < 1) violations.push_back(tag + ".out_channels must be >= 1");
        if (s.stride != 1 && s.stride != 2) violations.push_back(tag + ".stride must be 1 or 2");
        if (s.block_kind == BlockKind::kBottleneck && s.out_channels % 4 != 0) {
            violations.push_back(tag + ".out_channels must be divisible by the expansion factor 4");
        }
    }
    if (!violations.empty()) {
        std::string msg = "invalid model config:";
        for (const std::string& v : violations) msg += "\n  - " + v;
        throw ValidationError(msg);
    }
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["variant_name"] = variant_name;
    j["stem_kind"] = stem_kind == StemKind::kSpaceToDepth ? "space_to_depth" : "conv7x7";
    j["stem_conv_channels"] = stem_conv_channels;
    j["num_classes"] = num_classes;
    j["leaky_slope"] = leaky_slope;
    j["use_aa"] = use_aa;
    j["stages"] = nlohmann::json::array();
    for (const StageSpec& s : stages) {
        j["stages"].push_back({{"block", s.block_kind == BlockKind::kBasic ? "basic" : "bottleneck"},
                               {"repeats", s.repeats},
                               {"out_channels", s.out_channels},
                               {"stride", s.stride},
                               {"use_se", s.use_se}});
    }
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.variant_name = j.at("variant_name").get<std::string>();
        const std::string stem = j.at("stem_kind").get<std::string>();
        if (stem == "space_to_depth") {
            cfg.stem_kind = StemKind::kSpaceToDepth;
        } else if (stem == "conv7x7") {
            cfg.stem_kind = StemKind::kConv7x7;
        } else {
            throw ValidationError("config stem_kind must be space_to_depth or conv7x7");
        }
        cfg.stem_conv_channels = j.at("stem_conv_channels").get<int64_t>();
        cfg.num_classes = j.at("num_classes").get<int64_t>();
        cfg.leaky_slope = j.at("leaky_slope").get<float>();
        cfg.use_aa = j.value("use_aa", true);
        const auto& stages = j.at("stages");
        if (!stages.is_array() || stages.size() != 4) {
            throw ValidationError("config must list exactly 4 stages");
        }
        for (size_t i = 0; i < 4; ++i) {
            const auto& s = stages[i];
            const std::string kind = s.at("block").get<std::string>();
            if (kind != "basic" && kind != "bottleneck") {
                throw ValidationError("stage block kind must be basic or bottleneck");
            }
            cfg.stages[i].block_kind = kind == "basic" ? BlockKind::kBasic : BlockKind::kBottleneck;
            cfg.stages[i].repeats = s.at("repeats").get<int64_t>();
            cfg.stages[i].out_channels = s.at("out_channels").get<int64_t>();
            cfg.stages[i].stride = s.at("stride").get<int64_t>();
            cfg.stages[i].use_se = s.at("use_se").get<bool>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config missing or mistyped field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

Model build(const ModelConfig& config, uint64_t init_seed) {
    config.validate();

    Model m;
    m.config = config;
    Builder b{InitRng(init_seed), config.leaky_slope, config.use_aa};

    if (config.stem_kind == StemKind::kSpaceToDepth) {
        m.stem.conv = b.conv(48, config.stem_conv_channels, 1, 1, 0);
        m.stem.iabn = b.iabn(config.stem_conv_channels, config.leaky_slope);
        m.stem.maxpool = false;
    } else {
        m.stem.conv = b.conv(3, config.stem_conv_channels, 7, 2, 3);
        m.stem.iabn = b.iabn(config.stem_conv_channels, config.leaky_slope);
        m.stem.maxpool = true;
    }

    int64_t in_ch = config.stem_conv_channels;
    m.stages.resize(4);
    for (size_t s = 0; s < 4; ++s) {
        const StageSpec& spec = config.stages[s];
        m.stages[s].reserve(static_cast<size_t>(spec.repeats));
        for (int64_t i = 0; i < spec.repeats; ++i) {
            const int64_t stride = i == 0 ? spec.stride : 1;
            m.stages[s].push_back(
                b.block(spec.block_kind, in_ch, spec.out_channels, stride, spec.use_se));
            in_ch = spec.out_channels;
        }
    }

    // Classifier zero-init: a fresh model emits uniform logits.
    m.fc_weight = Tensor({config.num_classes, in_ch});
    m.fc_bias = Tensor({config.num_classes});
    return m;
}

Model build_resnet50_baseline(int64_t num_classes, uint64_t init_seed) {
    return build(ModelConfig::resnet50(num_classes), init_seed);
}

BlockParams make_block_params(BlockKind kind, int64_t in_channels, int64_t out_channels,
                              int64_t stride, bool use_se, bool use_aa, float slope,
                              uint64_t init_seed) {
    Builder b{InitRng(init_seed), slope, use_aa};
    return b.block(kind, in_channels, out_channels, stride, use_se);
}

namespace {

void validate_input(const Tensor& x) {
    if (x.rank() != 4) {
        throw DimensionError("forward expects rank-4 NCHW input, got " + x.shape_str());
    }
    if (x.dim(1) != 3) {
        throw DimensionError("forward expects 3 input channels (axis 1), got " +
                             std::to_string(x.dim(1)));
    }
    if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0) {
        throw DimensionError("input spatial extents must be divisible by 32 (4x stem reduction, "
                             "2x per stage); got " + x.shape_str());
    }
}

Tensor run_stem(const Model& m, const Tensor& x, bool inplace) {
    Tensor cur;
    if (m.config.stem_kind == StemKind::kSpaceToDepth) {
        cur = space_to_depth(x, 4);
        cur = conv2d(cur, m.stem.conv);
        if (inplace) iabn_(cur, m.stem.iabn); else cur = iabn(cur, m.stem.iabn);
    } else {
        cur = conv2d(x, m.stem.conv);
        if (inplace) iabn_(cur, m.stem.iabn); else cur = iabn(cur, m.stem.iabn);
        if (m.stem.maxpool) cur = max_pool2d(cur, 3, 2, 1);
    }
    return cur;
}

Tensor forward_impl(const Model& m, const Tensor& x, const ForwardOptions& opts,
                    ForwardTrace* trace) {
    validate_input(x);
    Tensor cur = run_stem(m, x, opts.inplace);
    if (trace) trace->stem_dims = cur.dims();
    for (size_t s = 0; s < m.stages.size(); ++s) {
        for (const BlockParams& p : m.stages[s]) cur = run_block(cur, p, opts.inplace);
        if (trace) trace->stage_dims[s] = cur.dims();
    }
    Tensor pooled = fast_gap(cur, /*flatten=*/true);
    if (trace) trace->pooled_dims = pooled.dims();
    return linear(pooled, m.fc_weight, &m.fc_bias);
}

}  // namespace

Tensor forward(const Model& m, const Tensor& x, const ForwardOptions& opts) {
    return forward_impl(m, x, opts, nullptr);
}

ForwardTrace forward_trace(const Model& m, const Tensor& x) {
    ForwardTrace trace;
    trace.logits = forward_impl(m, x, {}, &trace);
    return trace;
}

Tensor forward_stem(const Model& m, const Tensor& x, bool inplace) {
    validate_input(x);
    return run_stem(m, x, inplace);
}

namespace {

template <typename ModelT, typename Fn>
void visit_tensors(ModelT& m, Fn&& fn) {
    auto iabn_entries = [&fn](const std::string& prefix, auto& p) {
        fn(prefix + ".gamma", &p.gamma, true);
        fn(prefix + ".beta", &p.beta, true);
        fn(prefix + ".mean", &p.running_mean, false);
        fn(prefix + ".var", &p.running_var, false);
    };

    fn("stem.conv.weight", &m.stem.conv.weight, true);
    iabn_entries("stem.iabn", m.stem.iabn);

    for (size_t s = 0; s < m.stages.size(); ++s) {
        for (size_t i = 0; i < m.stages[s].size(); ++i) {
            auto& blk = m.stages[s][i];
            const std::string prefix =
                "stage" + std::to_string(s + 1) + ".block" + std::to_string(i + 1) + ".";
            fn(prefix + "conv1.weight", &blk.conv1.weight, true);
            iabn_entries(prefix + "iabn1", blk.iabn1);
            fn(prefix + "conv2.weight", &blk.conv2.weight, true);
            iabn_entries(prefix + "iabn2", blk.iabn2);
            if (blk.conv3) {
                fn(prefix + "conv3.weight", &blk.conv3->weight, true);
                iabn_entries(prefix + "iabn3", *blk.iabn3);
            }
            if (blk.se) {
                fn(prefix + "se.w_reduce", &blk.se->w_reduce, true);
                fn(prefix + "se.b_reduce", &blk.se->b_reduce, true);
                fn(prefix + "se.w_expand", &blk.se->w_expand, true);
                fn(prefix + "se.b_expand", &blk.se->b_expand, true);
            }
            if (blk.downsample) {
                fn(prefix + "downsample.conv.weight", &blk.downsample->conv.weight, true);
                iabn_entries(prefix + "downsample.iabn", blk.downsample->iabn);
            }
        }
    }
    fn("head.fc.weight", &m.fc_weight, true);
    fn("head.fc.bias", &m.fc_bias, true);
}

}  // namespace

std::vector<NamedTensorView> named_tensors(const Model& m) {
    std::vector<NamedTensorView> out;
    visit_tensors(m, [&out](const std::string& name, const Tensor* t, bool learnable) {
        out.push_back({name, t, learnable});
    });
    return out;
}

std::vector<NamedTensorSlot> named_tensor_slots(Model& m) {
    std::vector<NamedTensorSlot> out;
    visit_tensors(m, [&out](const std::string& name, Tensor* t, bool learnable) {
        out.push_back({name, t, learnable});
    });
    return out;
}

}  // namespace tresnet
