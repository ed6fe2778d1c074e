#pragma once

#include <optional>

#include "tresnet/ops.hpp"
#include "tresnet/tensor.hpp"

namespace tresnet {

/// Fused inference-mode batch-norm + LeakyReLU. slope == 1 disables the
/// activation (normalization only), used before residual sums.
struct IabnParams {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    float eps = 1e-5f;
    float slope = 0.01f;
};

/// Squeeze-and-excitation projections. C_red = max(1, round(C/reduction)).
struct SeParams {
    Tensor w_reduce;  // (C_red, C)
    Tensor b_reduce;  // (C_red)
    Tensor w_expand;  // (C, C_red)
    Tensor b_expand;  // (C)
    int64_t reduction = 4;
};

enum class BlockKind { kBasic, kBottleneck };

/// Shortcut branch: conv1x1 at the block stride followed by
/// identity-activation IABN.
struct DownsampleParams {
    ConvParams conv;
    IabnParams iabn;
};

struct BlockParams {
    BlockKind kind = BlockKind::kBasic;
    ConvParams conv1;                    // basic: 3x3; bottleneck: 1x1 reduce
    ConvParams conv2;                    // basic: 3x3; bottleneck: 3x3
    std::optional<ConvParams> conv3;     // bottleneck: 1x1 expand
    IabnParams iabn1;
    IabnParams iabn2;
    std::optional<IabnParams> iabn3;
    std::optional<SeParams> se;
    std::optional<DownsampleParams> downsample;
    int64_t stride = 1;
    bool use_aa = true;  // stride-2 convs run stride-1 + blur when set
    float slope = 0.01f; // post-sum activation
};

/// Moves 4x4 (or block x block) spatial tiles into channels:
/// (N,C,H,W) -> (N, C*block^2, H/block, W/block). Output channel
/// k = (h_off*block + w_off)*C + c. Pure permutation, no arithmetic.
Tensor space_to_depth(const Tensor& x, int64_t block = 4);

/// Exact inverse permutation of space_to_depth.
Tensor depth_to_space(const Tensor& x, int64_t block = 4);

/// Fixed depthwise anti-alias kernel: outer([1,2,1],[1,2,1])/16 per
/// channel, stride 2, reflect pad 1, no bias. Never trainable.
ConvParams blur_filter(int64_t channels);

/// Reflect-pad 1 then depthwise stride-2 blur: (N,C,H,W) -> (N,C,ceil(H/2),ceil(W/2)).
Tensor aa_downsample(const Tensor& x, int64_t channels);

/// y = leaky_relu(gamma*(x - mean)/sqrt(var + eps) + beta, slope),
/// per channel, running statistics only.
Tensor iabn(const Tensor& x, const IabnParams& p);
Tensor& iabn_(Tensor& x, const IabnParams& p);

/// Global average pool as one flat reduction over H*W per (n,c).
/// Shape (N,C) when flatten, else (N,C,1,1).
Tensor fast_gap(const Tensor& x, bool flatten = false);

/// x * sigmoid(w_expand*relu(w_reduce*gap(x) + b_reduce) + b_expand),
/// gate broadcast per channel.
Tensor se_block(const Tensor& x, const SeParams& p);
Tensor& se_block_(Tensor& x, const SeParams& p);

Tensor basic_block(const Tensor& x, const BlockParams& p, bool inplace = true);
Tensor bottleneck_block(const Tensor& x, const BlockParams& p, bool inplace = true);
Tensor run_block(const Tensor& x, const BlockParams& p, bool inplace = true);

/// Mean over all (n,k) of -[y*(1-p)^gp*log p + (1-y)*p^gn*log(1-p)],
/// p = sigmoid(logit) clamped to [1e-7, 1-1e-7]. Targets must be exactly
/// 0 or 1.
double asymmetric_focal_loss(const Tensor& logits, const Tensor& targets,
                             float gamma_pos, float gamma_neg);

namespace testhook {
/// Scales the blur kernel before normalization checks see it. Exists for
/// the verify negative control only; 1.0 restores normal behavior.
void set_blur_kernel_scale(float scale);
float blur_kernel_scale();
}  // namespace testhook

}  // namespace tresnet
