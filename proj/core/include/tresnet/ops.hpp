#pragma once

#include <optional>

#include "tresnet/tensor.hpp"

namespace tresnet {

enum class PaddingMode { kZeros, kReflect };

/// 2-D convolution parameters. Weight layout (out_ch, in_ch/groups, kh, kw).
struct ConvParams {
    Tensor weight;
    std::optional<Tensor> bias;
    int64_t stride = 1;
    int64_t padding = 0;
    PaddingMode padding_mode = PaddingMode::kZeros;
    int64_t groups = 1;

    int64_t out_channels() const { return weight.dim(0); }
    int64_t in_channels() const { return weight.dim(1) * groups; }
    int64_t kernel_h() const { return weight.dim(2); }
    int64_t kernel_w() const { return weight.dim(3); }
};

/// Cross-correlation (deep-learning convention, no kernel flip).
/// Output shape (N, out_ch, (H+2p-kh)/stride+1, (W+2p-kw)/stride+1).
Tensor conv2d(const Tensor& x, const ConvParams& p);

/// Naive quadruple-loop path with identical semantics; kept as the
/// selectable reference for oracle testing.
Tensor conv2d_reference(const Tensor& x, const ConvParams& p);

/// x (N, in) * weight (out, in)^T + bias (out) -> (N, out).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr);

/// Windowed max; zero-padding contributes -inf (padding never wins).
Tensor max_pool2d(const Tensor& x, int64_t kernel, int64_t stride, int64_t pad);

/// Windowed arithmetic mean over full kernel*kernel windows, no padding.
/// Deliberately generic window machinery; the fast GAP path in layers is
/// benchmarked against this.
Tensor avg_pool2d(const Tensor& x, int64_t kernel, int64_t stride);

/// Mirror padding excluding the edge pixel: [a,b,c] pad 1 -> [b,a,b,c,b].
/// Requires pad < H and pad < W.
Tensor pad_reflect(const Tensor& x, int64_t pad);

// Elementwise ops. The trailing-underscore variants overwrite x's buffer
// and return it; results are bitwise identical to the out-of-place forms.

Tensor add(const Tensor& x, const Tensor& y);
Tensor& add_(Tensor& x, const Tensor& y);

Tensor leaky_relu(const Tensor& x, float slope);
Tensor& leaky_relu_(Tensor& x, float slope);

Tensor sigmoid(const Tensor& x);

/// Scales each (n,c) spatial map of x (N,C,H,W) by gate (N,C,1,1) or (N,C).
Tensor mul_broadcast_channel(const Tensor& x, const Tensor& gate);
Tensor& mul_broadcast_channel_(Tensor& x, const Tensor& gate);

}  // namespace tresnet
