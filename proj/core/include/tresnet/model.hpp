#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tresnet/layers.hpp"
#include "tresnet/tensor.hpp"

namespace tresnet {

enum class StemKind { kSpaceToDepth, kConv7x7 };

/// One residual stage. out_channels is the block output width
/// (post-expansion for Bottleneck); stride applies to the first block.
struct StageSpec {
    BlockKind block_kind = BlockKind::kBasic;
    int64_t repeats = 1;
    int64_t out_channels = 64;
    int64_t stride = 1;
    bool use_se = false;
};

struct ModelConfig {
    std::string variant_name;
    StemKind stem_kind = StemKind::kSpaceToDepth;
    int64_t stem_conv_channels = 64;
    std::array<StageSpec, 4> stages{};
    int64_t num_classes = 1000;
    float leaky_slope = 0.01f;
    bool use_aa = true;

    /// Throws ValidationError listing every violation.
    void validate() const;

    static ModelConfig tresnet_m(int64_t num_classes = 1000);
    static ModelConfig tresnet_l(int64_t num_classes = 1000);
    static ModelConfig tresnet_xl(int64_t num_classes = 1000);
    static ModelConfig resnet50(int64_t num_classes = 1000);

    /// Maps "m"/"l"/"xl"/"resnet50" (and the tresnet- prefixed forms).
    static std::optional<ModelConfig> for_variant(std::string_view name,
                                                  int64_t num_classes = 1000);

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct StemParams {
    ConvParams conv;
    IabnParams iabn;
    bool maxpool = false;  // conv7x7 stem only: 3x3 stride-2 pad-1 max pool
};

struct Model {
    ModelConfig config;
    StemParams stem;
    std::vector<std::vector<BlockParams>> stages;
    Tensor fc_weight;  // (num_classes, feature_width)
    Tensor fc_bias;    // (num_classes)

    int64_t feature_width() const { return fc_weight.dim(1); }
};

/// Deterministic construction: identical (config, seed) pairs produce
/// bitwise-identical parameter tensors.
Model build(const ModelConfig& config, uint64_t init_seed);

/// Standalone block construction with the same deterministic
/// initialization as build(); used by ablation benchmarks and tests.
BlockParams make_block_params(BlockKind kind, int64_t in_channels, int64_t out_channels,
                              int64_t stride, bool use_se, bool use_aa, float slope,
                              uint64_t init_seed);

/// Canonical ResNet50: conv7x7 s2 + 3x3 maxpool stem, Bottleneck stages
/// 3/4/6/3, plain ReLU, no SE, no AA.
Model build_resnet50_baseline(int64_t num_classes, uint64_t init_seed);

struct ForwardOptions {
    bool inplace = true;
};

/// Full forward pass to logits (N, num_classes). Input must be rank-4
/// with 3 channels and spatial extents divisible by 32.
Tensor forward(const Model& m, const Tensor& x, const ForwardOptions& opts = {});

struct ForwardTrace {
    std::vector<int64_t> stem_dims;
    std::array<std::vector<int64_t>, 4> stage_dims;
    std::vector<int64_t> pooled_dims;
    Tensor logits;
};

ForwardTrace forward_trace(const Model& m, const Tensor& x);

/// Stem-only forward (used by bench stem subjects).
Tensor forward_stem(const Model& m, const Tensor& x, bool inplace = true);

/// Named view of every stored tensor in deterministic manifest order.
/// learnable is false for IABN running statistics.
struct NamedTensorView {
    std::string name;
    const Tensor* tensor;
    bool learnable;
};
std::vector<NamedTensorView> named_tensors(const Model& m);

/// Mutable counterpart used by the weight loader.
struct NamedTensorSlot {
    std::string name;
    Tensor* tensor;
    bool learnable;
};
std::vector<NamedTensorSlot> named_tensor_slots(Model& m);

}  // namespace tresnet
