#include "tresnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tresnet/errors.hpp"
#include "tresnet/ops.hpp"

namespace tresnet::gradcheck {

Tensor finite_difference(const std::function<double(const Tensor&)>& fn, const Tensor& x,
                         double h) {
    if (!(h > 0.0)) throw ValidationError("finite_difference step h must be > 0");
    Tensor grad(x.dims());
    Tensor probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float original = probe.at(i);
        const float plus = static_cast<float>(static_cast<double>(original) + h);
        const float minus = static_cast<float>(static_cast<double>(original) - h);
        probe.at(i) = plus;
        const double f_plus = fn(probe);
        probe.at(i) = minus;
        const double f_minus = fn(probe);
        probe.at(i) = original;
        // Divide by the realized step to absorb float rounding of x +- h.
        const double step = static_cast<double>(plus) - static_cast<double>(minus);
        grad.at(i) = static_cast<float>((f_plus - f_minus) / step);
    }
    return grad;
}

Tensor backward_space_to_depth(const Tensor& grad_out, int64_t block) {
    return depth_to_space(grad_out, block);
}

Tensor conv2d_input_grad(const Tensor& grad_out, const ConvParams& p,
                         const std::vector<int64_t>& input_dims) {
    if (input_dims.size() != 4) {
        throw DimensionError("conv2d_input_grad expects rank-4 input dims");
    }
    const int64_t n = input_dims[0], in_ch = input_dims[1], h = input_dims[2], w = input_dims[3];
    const int64_t out_ch = p.out_channels(), kh = p.kernel_h(), kw = p.kernel_w();
    const int64_t pad = p.padding, stride = p.stride;
    const int64_t cin_g = in_ch / p.groups, cout_g = out_ch / p.groups;
    if (grad_out.rank() != 4 || grad_out.dim(0) != n || grad_out.dim(1) != out_ch) {
        throw DimensionError("conv2d_input_grad grad_out shape " + grad_out.shape_str() +
                             " inconsistent with conv geometry");
    }
    const int64_t h_out = grad_out.dim(2), w_out = grad_out.dim(3);
    const int64_t hp = h + 2 * pad, wp = w + 2 * pad;

    // Scatter through the correlation taps into padded coordinates.
    Tensor gpad({n, in_ch, hp, wp});
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t oc = 0; oc < out_ch; ++oc) {
            const int64_t grp = oc / cout_g;
            for (int64_t oh = 0; oh < h_out; ++oh) {
                for (int64_t ow = 0; ow < w_out; ++ow) {
                    const float g = grad_out.at(nn, oc, oh, ow);
                    for (int64_t c = 0; c < cin_g; ++c) {
                        const int64_t ic = grp * cin_g + c;
                        for (int64_t r = 0; r < kh; ++r) {
                            for (int64_t s = 0; s < kw; ++s) {
                                gpad.at(nn, ic, oh * stride + r, ow * stride + s) +=
                                    g * p.weight.at(oc, c, r, s);
                            }
                        }
                    }
                }
            }
        }
    }
    if (pad == 0) return gpad;

    // Fold the padding adjoint back onto the input extent.
    Tensor gx({n, in_ch, h, w});
    auto mirror = [](int64_t i, int64_t extent) {
        if (i < 0) return -i;
        if (i >= extent) return 2 * extent - 2 - i;
        return i;
    };
    const bool reflect = p.padding_mode == PaddingMode::kReflect;
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t c = 0; c < in_ch; ++c) {
            for (int64_t i = 0; i < hp; ++i) {
                const int64_t ih = i - pad;
                for (int64_t j = 0; j < wp; ++j) {
                    const int64_t iw = j - pad;
                    const float v = gpad.at(nn, c, i, j);
                    if (reflect) {
                        gx.at(nn, c, mirror(ih, h), mirror(iw, w)) += v;
                    } else if (ih >= 0 && ih < h && iw >= 0 && iw < w) {
                        gx.at(nn, c, ih, iw) += v;
                    }
                }
            }
        }
    }
    return gx;
}

Tensor backward_aa(const Tensor& grad_out, int64_t channels,
                   const std::vector<int64_t>& input_dims) {
    return conv2d_input_grad(grad_out, blur_filter(channels), input_dims);
}

IabnGrads backward_iabn(const Tensor& x, const IabnParams& p, const Tensor& grad_out) {
    if (!x.same_shape(grad_out)) {
        throw DimensionError("backward_iabn shape mismatch: x " + x.shape_str() + " vs grad_out " +
                             grad_out.shape_str());
    }
    const int64_t n = x.dim(0), c = x.dim(1);
    const int64_t plane = x.dim(2) * x.dim(3);

    IabnGrads g;
    g.input = Tensor(x.dims());
    g.gamma = Tensor({c});
    g.beta = Tensor({c});

    for (int64_t cc = 0; cc < c; ++cc) {
        const float inv_std = 1.0f / std::sqrt(p.running_var.at(cc) + p.eps);
        const float scale = p.gamma.at(cc) * inv_std;
        const float mean = p.running_mean.at(cc);
        const float beta = p.beta.at(cc);
        double sum_beta = 0.0, sum_gamma = 0.0;
        for (int64_t nn = 0; nn < n; ++nn) {
            const int64_t base = (nn * c + cc) * plane;
            for (int64_t j = 0; j < plane; ++j) {
                const float xv = x.at(base + j);
                const float xhat = (xv - mean) * inv_std;
                const float pre = p.gamma.at(cc) * xhat + beta;
                const float dpre = grad_out.at(base + j) * (pre >= 0.0f ? 1.0f : p.slope);
                sum_beta += dpre;
                sum_gamma += static_cast<double>(dpre) * xhat;
                g.input.at(base + j) = dpre * scale;
            }
        }
        g.beta.at(cc) = static_cast<float>(sum_beta);
        g.gamma.at(cc) = static_cast<float>(sum_gamma);
    }
    return g;
}

Tensor backward_gap(const Tensor& grad_out, const std::vector<int64_t>& input_dims) {
    if (input_dims.size() != 4) throw DimensionError("backward_gap expects rank-4 input dims");
    const int64_t n = input_dims[0], c = input_dims[1];
    const int64_t plane = input_dims[2] * input_dims[3];
    if (grad_out.numel() != n * c) {
        throw DimensionError("backward_gap grad_out " + grad_out.shape_str() +
                             " inconsistent with input dims");
    }
    const float inv = 1.0f / static_cast<float>(plane);
    Tensor gx(input_dims);
    for (int64_t idx = 0; idx < n * c; ++idx) {
        const float v = grad_out.at(idx) * inv;
        float* row = gx.data() + idx * plane;
        std::fill(row, row + plane, v);
    }
    return gx;
}

SeGrads backward_se(const Tensor& x, const SeParams& p, const Tensor& grad_out) {
    if (!x.same_shape(grad_out)) {
        throw DimensionError("backward_se shape mismatch: x " + x.shape_str() + " vs grad_out " +
                             grad_out.shape_str());
    }
    const int64_t n = x.dim(0), c = x.dim(1);
    const int64_t plane = x.dim(2) * x.dim(3);
    const int64_t red = p.w_reduce.dim(0);

    // Recompute forward intermediates.
    Tensor squeezed = fast_gap(x, /*flatten=*/true);              // s (N,C)
    Tensor pre_hidden = linear(squeezed, p.w_reduce, &p.b_reduce); // u (N,R)
    Tensor hidden = leaky_relu(pre_hidden, 0.0f);                  // a (N,R)
    Tensor gate = sigmoid(linear(hidden, p.w_expand, &p.b_expand)); // g (N,C)

    SeGrads g;
    g.input = Tensor(x.dims());
    g.w_reduce = Tensor(p.w_reduce.dims());
    g.b_reduce = Tensor({red});
    g.w_expand = Tensor(p.w_expand.dims());
    g.b_expand = Tensor({c});

    // dL/dg then through the sigmoid.
    Tensor dv({n, c});
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t cc = 0; cc < c; ++cc) {
            const int64_t base = (nn * c + cc) * plane;
            double dg = 0.0;
            for (int64_t j = 0; j < plane; ++j) {
                dg += static_cast<double>(grad_out.at(base + j)) * x.at(base + j);
            }
            const float gv = gate.at(nn, cc);
            dv.at(nn, cc) = static_cast<float>(dg) * gv * (1.0f - gv);
        }
    }

    // Expand projection adjoints.
    for (int64_t cc = 0; cc < c; ++cc) {
        double sum = 0.0;
        for (int64_t nn = 0; nn < n; ++nn) sum += dv.at(nn, cc);
        g.b_expand.at(cc) = static_cast<float>(sum);
        for (int64_t r = 0; r < red; ++r) {
            double acc = 0.0;
            for (int64_t nn = 0; nn < n; ++nn) {
                acc += static_cast<double>(dv.at(nn, cc)) * hidden.at(nn, r);
            }
            g.w_expand.at(cc, r) = static_cast<float>(acc);
        }
    }

    // Through the ReLU into the reduce projection.
    Tensor du({n, red});
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t r = 0; r < red; ++r) {
            double acc = 0.0;
            for (int64_t cc = 0; cc < c; ++cc) {
                acc += static_cast<double>(dv.at(nn, cc)) * p.w_expand.at(cc, r);
            }
            du.at(nn, r) = pre_hidden.at(nn, r) >= 0.0f ? static_cast<float>(acc) : 0.0f;
        }
    }
    for (int64_t r = 0; r < red; ++r) {
        double sum = 0.0;
        for (int64_t nn = 0; nn < n; ++nn) sum += du.at(nn, r);
        g.b_reduce.at(r) = static_cast<float>(sum);
        for (int64_t cc = 0; cc < c; ++cc) {
            double acc = 0.0;
            for (int64_t nn = 0; nn < n; ++nn) {
                acc += static_cast<double>(du.at(nn, r)) * squeezed.at(nn, cc);
            }
            g.w_reduce.at(r, cc) = static_cast<float>(acc);
        }
    }

    // Input gradient: direct gating path plus the squeeze path.
    const float inv_plane = 1.0f / static_cast<float>(plane);
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t cc = 0; cc < c; ++cc) {
            double ds = 0.0;
            for (int64_t r = 0; r < red; ++r) {
                ds += static_cast<double>(du.at(nn, r)) * p.w_reduce.at(r, cc);
            }
            const float spread = static_cast<float>(ds) * inv_plane;
            const float gv = gate.at(nn, cc);
            const int64_t base = (nn * c + cc) * plane;
            for (int64_t j = 0; j < plane; ++j) {
                g.input.at(base + j) = grad_out.at(base + j) * gv + spread;
            }
        }
    }
    return g;
}

Tensor backward_focal(const Tensor& logits, const Tensor& targets, float gamma_pos,
                      float gamma_neg) {
    if (!logits.same_shape(targets)) {
        throw DimensionError("backward_focal shape mismatch: " + logits.shape_str() + " vs " +
                             targets.shape_str());
    }
    constexpr double kProbEps = 1e-7;
    const int64_t m = logits.numel();
    const double inv_m = 1.0 / static_cast<double>(m);
    const double gp = gamma_pos, gn = gamma_neg;

    Tensor grad(logits.dims());
    for (int64_t i = 0; i < m; ++i) {
        const double p_raw = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.at(i))));
        const double p = std::min(1.0 - kProbEps, std::max(kProbEps, p_raw));
        if (p != p_raw) {
            grad.at(i) = 0.0f;  // clamped region: loss locally constant in the logit
            continue;
        }
        double dl_dp;
        if (targets.at(i) == 1.0f) {
            dl_dp = -(-gp * std::pow(1.0 - p, gp - 1.0) * std::log(p) + std::pow(1.0 - p, gp) / p);
        } else {
            dl_dp = -(gn * std::pow(p, gn - 1.0) * std::log(1.0 - p) - std::pow(p, gn) / (1.0 - p));
        }
        grad.at(i) = static_cast<float>(dl_dp * p * (1.0 - p) * inv_m);
    }
    return grad;
}

GradResult compare_gradients(Tensor analytic, Tensor numeric) {
    if (!analytic.same_shape(numeric)) {
        throw DimensionError("compare_gradients shape mismatch: " + analytic.shape_str() + " vs " +
                             numeric.shape_str());
    }
    GradResult r;
    for (int64_t i = 0; i < analytic.numel(); ++i) {
        const double a = analytic.at(i);
        const double nv = numeric.at(i);
        const double abs_err = std::fabs(a - nv);
        const double rel_err = abs_err / std::max({std::fabs(a), std::fabs(nv), 1e-6});
        r.max_abs_error = std::max(r.max_abs_error, abs_err);
        r.max_rel_error = std::max(r.max_rel_error, rel_err);
    }
    r.analytic = std::move(analytic);
    r.numeric = std::move(numeric);
    return r;
}

}  // namespace tresnet::gradcheck
