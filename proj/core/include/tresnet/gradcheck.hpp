#pragma once

#include <functional>

#include "tresnet/layers.hpp"
#include "tresnet/tensor.hpp"

namespace tresnet::gradcheck {

/// Central differences (f(x+h*e_i) - f(x-h*e_i)) / (2h) per element,
/// accumulated in 64-bit.
Tensor finite_difference(const std::function<double(const Tensor&)>& fn,
                         const Tensor& x, double h);

/// Adjoint of the forward permutation: exact, no arithmetic.
Tensor backward_space_to_depth(const Tensor& grad_out, int64_t block = 4);

/// Input gradient of conv2d (cross-correlation adjoint, including the
/// reflect-padding adjoint). The blur filter itself has no parameters.
Tensor conv2d_input_grad(const Tensor& grad_out, const ConvParams& p,
                         const std::vector<int64_t>& input_dims);

Tensor backward_aa(const Tensor& grad_out, int64_t channels,
                   const std::vector<int64_t>& input_dims);

struct IabnGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};
/// Inference-mode adjoint: running statistics treated as constants.
IabnGrads backward_iabn(const Tensor& x, const IabnParams& p, const Tensor& grad_out);

/// grad_out may be (N,C) (flatten) or (N,C,1,1); returns grad w.r.t. the
/// rank-4 input: each element receives grad/(H*W).
Tensor backward_gap(const Tensor& grad_out, const std::vector<int64_t>& input_dims);

struct SeGrads {
    Tensor input;
    Tensor w_reduce;
    Tensor b_reduce;
    Tensor w_expand;
    Tensor b_expand;
};
SeGrads backward_se(const Tensor& x, const SeParams& p, const Tensor& grad_out);

/// d(mean loss)/d(logits).
Tensor backward_focal(const Tensor& logits, const Tensor& targets,
                      float gamma_pos, float gamma_neg);

struct GradResult {
    Tensor analytic;
    Tensor numeric;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

/// rel error per element: |a-n| / max(|a|,|n|,1e-6).
GradResult compare_gradients(Tensor analytic, Tensor numeric);

}  // namespace tresnet::gradcheck
