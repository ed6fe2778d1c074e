#include "tresnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tresnet/errors.hpp"
#include "tresnet/runtime.hpp"

namespace tresnet {

namespace {

void require_rank4(const Tensor& x, const char* what) {
    if (x.rank() != 4) {
        throw DimensionError(std::string(what) + " expects a rank-4 tensor, got rank " +
                             std::to_string(x.rank()) + " " + x.shape_str());
    }
}

struct ConvGeometry {
    int64_t n, in_ch, h, w;
    int64_t out_ch, kh, kw;
    int64_t stride, pad, groups;
    int64_t cin_g, cout_g;
    int64_t h_out, w_out;
};

ConvGeometry resolve_conv(const Tensor& x, const ConvParams& p) {
    require_rank4(x, "conv2d input");
    if (p.weight.rank() != 4) {
        throw DimensionError("conv2d weight expects rank 4 (out_ch, in_ch/groups, kh, kw), got " +
                             p.weight.shape_str());
    }
    if (p.stride < 1) throw ValidationError("conv2d stride must be >= 1");
    if (p.padding < 0) throw ValidationError("conv2d padding must be >= 0");
    if (p.groups < 1) throw ValidationError("conv2d groups must be >= 1");

    ConvGeometry g;
    g.n = x.dim(0);
    g.in_ch = x.dim(1);
    g.h = x.dim(2);
    g.w = x.dim(3);
    g.out_ch = p.out_channels();
    g.kh = p.kernel_h();
    g.kw = p.kernel_w();
    g.stride = p.stride;
    g.pad = p.padding;
    g.groups = p.groups;

    if (g.in_ch % g.groups != 0 || g.out_ch % g.groups != 0) {
        throw DimensionError("conv2d channels must divide groups: in=" + std::to_string(g.in_ch) +
                             " out=" + std::to_string(g.out_ch) + " groups=" + std::to_string(g.groups));
    }
    if (g.in_ch != p.in_channels()) {
        throw DimensionError("conv2d axis 1 (channels) mismatch: input has " +
                             std::to_string(g.in_ch) + ", weight expects " +
                             std::to_string(p.in_channels()));
    }
    if (p.bias && (p.bias->rank() != 1 || p.bias->dim(0) != g.out_ch)) {
        throw DimensionError("conv2d bias must have shape (" + std::to_string(g.out_ch) + ")");
    }
    if (p.padding_mode == PaddingMode::kReflect && (g.pad >= g.h || g.pad >= g.w)) {
        throw PaddingError("reflect pad " + std::to_string(g.pad) +
                           " requires pad < spatial extents " + x.shape_str());
    }
    if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
        throw DimensionError("conv2d padded spatial extents (" + std::to_string(g.h + 2 * g.pad) +
                             "," + std::to_string(g.w + 2 * g.pad) + ") smaller than kernel (" +
                             std::to_string(g.kh) + "," + std::to_string(g.kw) + ")");
    }
    g.cin_g = g.in_ch / g.groups;
    g.cout_g = g.out_ch / g.groups;
    g.h_out = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
    g.w_out = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
    return g;
}

// out (rows x cols) = a (rows x k) * b (k x cols), parallel over rows.
// Each output element accumulates over k in ascending order.
void gemm(const float* a, const float* b, float* out, int64_t rows, int64_t k_extent,
          int64_t cols) {
    runtime::parallel_for(0, rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            float* orow = out + r * cols;
            std::fill(orow, orow + cols, 0.0f);
            const float* arow = a + r * k_extent;
            for (int64_t k = 0; k < k_extent; ++k) {
                const float av = arow[k];
                const float* brow = b + k * cols;
                for (int64_t j = 0; j < cols; ++j) orow[j] += av * brow[j];
            }
        }
    });
}

void im2col(const float* src, int64_t cin_g, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t h_out, int64_t w_out, float* col) {
    // col row index k = (c*kh + r)*kw + s, matching the reference loop order.
    for (int64_t c = 0; c < cin_g; ++c) {
        const float* plane = src + c * h * w;
        for (int64_t r = 0; r < kh; ++r) {
            for (int64_t s = 0; s < kw; ++s) {
                float* dst = col + ((c * kh + r) * kw + s) * (h_out * w_out);
                for (int64_t oh = 0; oh < h_out; ++oh) {
                    const int64_t ih = oh * stride - pad + r;
                    if (ih < 0 || ih >= h) {
                        std::fill(dst, dst + w_out, 0.0f);
                        dst += w_out;
                        continue;
                    }
                    const float* row = plane + ih * w;
                    for (int64_t ow = 0; ow < w_out; ++ow) {
                        const int64_t iw = ow * stride - pad + s;
                        *dst++ = (iw >= 0 && iw < w) ? row[iw] : 0.0f;
                    }
                }
            }
        }
    }
}

void conv2d_depthwise(const Tensor& x, const ConvParams& p, const ConvGeometry& g, Tensor& out) {
    runtime::parallel_for(0, g.n * g.in_ch, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const int64_t n = idx / g.in_ch;
            const int64_t c = idx % g.in_ch;
            const float* plane = x.data() + (n * g.in_ch + c) * g.h * g.w;
            const float* kernel = p.weight.data() + c * g.kh * g.kw;
            float* dst = out.data() + (n * g.out_ch + c) * g.h_out * g.w_out;
            const float bias = p.bias ? p.bias->at(c) : 0.0f;
            for (int64_t oh = 0; oh < g.h_out; ++oh) {
                for (int64_t ow = 0; ow < g.w_out; ++ow) {
                    float acc = 0.0f;
                    for (int64_t r = 0; r < g.kh; ++r) {
                        const int64_t ih = oh * g.stride - g.pad + r;
                        if (ih < 0 || ih >= g.h) continue;
                        for (int64_t s = 0; s < g.kw; ++s) {
                            const int64_t iw = ow * g.stride - g.pad + s;
                            if (iw < 0 || iw >= g.w) continue;
                            acc += plane[ih * g.w + iw] * kernel[r * g.kw + s];
                        }
                    }
                    *dst++ = acc + bias;
                }
            }
        }
    });
}

void add_bias_rows(float* out, const Tensor& bias, int64_t ch_begin, int64_t channels,
                   int64_t plane) {
    for (int64_t c = 0; c < channels; ++c) {
        const float b = bias.at(ch_begin + c);
        float* row = out + c * plane;
        for (int64_t j = 0; j < plane; ++j) row[j] += b;
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
    if (p.padding_mode == PaddingMode::kReflect && p.padding > 0) {
        ConvParams inner = p;
        inner.padding = 0;
        inner.padding_mode = PaddingMode::kZeros;
        resolve_conv(x, p);  // validate reflect limits against the original extents
        return conv2d(pad_reflect(x, p.padding), inner);
    }

    const ConvGeometry g = resolve_conv(x, p);
    Tensor out({g.n, g.out_ch, g.h_out, g.w_out});

    if (g.groups == g.in_ch && g.in_ch == g.out_ch) {
        conv2d_depthwise(x, p, g, out);
        return out;
    }

    const int64_t plane = g.h_out * g.w_out;
    const int64_t k_extent = g.cin_g * g.kh * g.kw;
    const bool pointwise =
        g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0 && g.groups == 1;

    std::vector<float> col;
    if (!pointwise) col.resize(static_cast<size_t>(k_extent * plane));

    for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t grp = 0; grp < g.groups; ++grp) {
            const float* src = x.data() + (n * g.in_ch + grp * g.cin_g) * g.h * g.w;
            const float* b = src;
            if (!pointwise) {
                im2col(src, g.cin_g, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.h_out, g.w_out,
                       col.data());
                b = col.data();
            }
            float* dst = out.data() + (n * g.out_ch + grp * g.cout_g) * plane;
            gemm(p.weight.data() + grp * g.cout_g * k_extent, b, dst, g.cout_g, k_extent, plane);
            if (p.bias) add_bias_rows(dst, *p.bias, grp * g.cout_g, g.cout_g, plane);
        }
    }
    return out;
}

Tensor conv2d_reference(const Tensor& x, const ConvParams& p) {
    if (p.padding_mode == PaddingMode::kReflect && p.padding > 0) {
        ConvParams inner = p;
        inner.padding = 0;
        inner.padding_mode = PaddingMode::kZeros;
        resolve_conv(x, p);
        return conv2d_reference(pad_reflect(x, p.padding), inner);
    }

    const ConvGeometry g = resolve_conv(x, p);
    Tensor out({g.n, g.out_ch, g.h_out, g.w_out});

    for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t oc = 0; oc < g.out_ch; ++oc) {
            const int64_t grp = oc / g.cout_g;
            for (int64_t oh = 0; oh < g.h_out; ++oh) {
                for (int64_t ow = 0; ow < g.w_out; ++ow) {
                    float acc = 0.0f;
                    for (int64_t c = 0; c < g.cin_g; ++c) {
                        const int64_t ic = grp * g.cin_g + c;
                        for (int64_t r = 0; r < g.kh; ++r) {
                            const int64_t ih = oh * g.stride - g.pad + r;
                            if (ih < 0 || ih >= g.h) continue;
                            for (int64_t s = 0; s < g.kw; ++s) {
                                const int64_t iw = ow * g.stride - g.pad + s;
                                if (iw < 0 || iw >= g.w) continue;
                                acc += x.at(n, ic, ih, iw) * p.weight.at(oc, c, r, s);
                            }
                        }
                    }
                    if (p.bias) acc += p.bias->at(oc);
                    out.at(n, oc, oh, ow) = acc;
                }
            }
        }
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
    if (x.rank() != 2) {
        throw DimensionError("linear input expects rank 2 (N, in_features), got " + x.shape_str());
    }
    if (weight.rank() != 2) {
        throw DimensionError("linear weight expects rank 2 (out, in), got " + weight.shape_str());
    }
    const int64_t n = x.dim(0), in = x.dim(1);
    const int64_t out_f = weight.dim(0);
    if (weight.dim(1) != in) {
        throw DimensionError("linear axis 1 (in_features) mismatch: input " + std::to_string(in) +
                             " vs weight " + std::to_string(weight.dim(1)));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != out_f)) {
        throw DimensionError("linear bias must have shape (" + std::to_string(out_f) + ")");
    }

    Tensor out({n, out_f});
    runtime::parallel_for(0, n * out_f, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const int64_t row = idx / out_f;
            const int64_t o = idx % out_f;
            const float* xrow = x.data() + row * in;
            const float* wrow = weight.data() + o * in;
            float acc = 0.0f;
            for (int64_t i = 0; i < in; ++i) acc += xrow[i] * wrow[i];
            if (bias) acc += bias->at(o);
            out.at(row, o) = acc;
        }
    });
    return out;
}

Tensor max_pool2d(const Tensor& x, int64_t kernel, int64_t stride, int64_t pad) {
    require_rank4(x, "max_pool2d");
    if (kernel < 1 || stride < 1 || pad < 0) {
        throw ValidationError("max_pool2d requires kernel >= 1, stride >= 1, pad >= 0");
    }
    if (pad >= kernel) {
        throw ValidationError("max_pool2d pad must be < kernel so every window sees the input");
    }
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h + 2 * pad < kernel || w + 2 * pad < kernel) {
        throw DimensionError("max_pool2d kernel " + std::to_string(kernel) +
                             " larger than padded input " + x.shape_str());
    }
    const int64_t h_out = (h + 2 * pad - kernel) / stride + 1;
    const int64_t w_out = (w + 2 * pad - kernel) / stride + 1;

    Tensor out({n, c, h_out, w_out});
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const float* plane = x.data() + idx * h * w;
            float* dst = out.data() + idx * h_out * w_out;
            for (int64_t oh = 0; oh < h_out; ++oh) {
                for (int64_t ow = 0; ow < w_out; ++ow) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (int64_t r = 0; r < kernel; ++r) {
                        const int64_t ih = oh * stride - pad + r;
                        if (ih < 0 || ih >= h) continue;
                        for (int64_t s = 0; s < kernel; ++s) {
                            const int64_t iw = ow * stride - pad + s;
                            if (iw < 0 || iw >= w) continue;
                            best = std::max(best, plane[ih * w + iw]);
                        }
                    }
                    *dst++ = best;
                }
            }
        }
    });
    return out;
}

Tensor avg_pool2d(const Tensor& x, int64_t kernel, int64_t stride) {
    require_rank4(x, "avg_pool2d");
    if (kernel < 1 || stride < 1) {
        throw ValidationError("avg_pool2d requires kernel >= 1 and stride >= 1");
    }
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (kernel > h || kernel > w) {
        throw DimensionError("avg_pool2d kernel " + std::to_string(kernel) + " larger than input " +
                             x.shape_str());
    }
    const int64_t h_out = (h - kernel) / stride + 1;
    const int64_t w_out = (w - kernel) / stride + 1;
    const float inv = 1.0f / static_cast<float>(kernel * kernel);

    Tensor out({n, c, h_out, w_out});
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const int64_t nn = idx / c;
            const int64_t cc = idx % c;
            float* dst = out.data() + idx * h_out * w_out;
            for (int64_t oh = 0; oh < h_out; ++oh) {
                for (int64_t ow = 0; ow < w_out; ++ow) {
                    float acc = 0.0f;
                    for (int64_t r = 0; r < kernel; ++r) {
                        for (int64_t s = 0; s < kernel; ++s) {
                            acc += x.at(nn, cc, oh * stride + r, ow * stride + s);
                        }
                    }
                    *dst++ = acc * inv;
                }
            }
        }
    });
    return out;
}

Tensor pad_reflect(const Tensor& x, int64_t pad) {
    require_rank4(x, "pad_reflect");
    if (pad < 0) throw ValidationError("pad_reflect pad must be >= 0");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (pad >= h || pad >= w) {
        throw PaddingError("reflect pad " + std::to_string(pad) +
                           " must be smaller than spatial extents " + x.shape_str());
    }
    if (pad == 0) return x;

    const int64_t ho = h + 2 * pad, wo = w + 2 * pad;
    Tensor out({n, c, ho, wo});
    auto mirror = [](int64_t i, int64_t extent) {
        if (i < 0) return -i;
        if (i >= extent) return 2 * extent - 2 - i;
        return i;
    };
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const float* src = x.data() + idx * h * w;
            float* dst = out.data() + idx * ho * wo;
            for (int64_t oh = 0; oh < ho; ++oh) {
                const int64_t ih = mirror(oh - pad, h);
                for (int64_t ow = 0; ow < wo; ++ow) {
                    dst[oh * wo + ow] = src[ih * w + mirror(ow - pad, w)];
                }
            }
        }
    });
    return out;
}

namespace {

void require_same_shape(const Tensor& x, const Tensor& y, const char* what) {
    if (!x.same_shape(y)) {
        throw DimensionError(std::string(what) + " shape mismatch: " + x.shape_str() + " vs " +
                             y.shape_str());
    }
}

}  // namespace

Tensor& add_(Tensor& x, const Tensor& y) {
    require_same_shape(x, y, "add");
    float* xd = x.data();
    const float* yd = y.data();
    const int64_t n = x.numel();
    runtime::parallel_for(0, n, [&](int64_t b0, int64_t b1) {
        for (int64_t i = b0; i < b1; ++i) xd[i] += yd[i];
    }, 1 << 16);
    return x;
}

Tensor add(const Tensor& x, const Tensor& y) {
    Tensor out = x;
    add_(out, y);
    return out;
}

Tensor& leaky_relu_(Tensor& x, float slope) {
    if (slope < 0.0f) throw ValidationError("leaky_relu slope must be >= 0");
    float* xd = x.data();
    const int64_t n = x.numel();
    runtime::parallel_for(0, n, [&](int64_t b0, int64_t b1) {
        for (int64_t i = b0; i < b1; ++i) {
            const float v = xd[i];
            xd[i] = v >= 0.0f ? v : slope * v;
        }
    }, 1 << 16);
    return x;
}

Tensor leaky_relu(const Tensor& x, float slope) {
    Tensor out = x;
    leaky_relu_(out, slope);
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    float* d = out.data();
    const int64_t n = out.numel();
    runtime::parallel_for(0, n, [&](int64_t b0, int64_t b1) {
        for (int64_t i = b0; i < b1; ++i) d[i] = 1.0f / (1.0f + std::exp(-d[i]));
    }, 1 << 16);
    return out;
}

Tensor& mul_broadcast_channel_(Tensor& x, const Tensor& gate) {
    require_rank4(x, "mul_broadcast_channel");
    const int64_t n = x.dim(0), c = x.dim(1);
    const bool flat_gate = gate.rank() == 2;
    if (!(flat_gate || (gate.rank() == 4 && gate.dim(2) == 1 && gate.dim(3) == 1)) ||
        gate.dim(0) != n || gate.dim(1) != c) {
        throw DimensionError("channel gate must be (" + std::to_string(n) + "," +
                             std::to_string(c) + ",1,1) or (" + std::to_string(n) + "," +
                             std::to_string(c) + "), got " + gate.shape_str());
    }
    const int64_t plane = x.dim(2) * x.dim(3);
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const float g = gate.data()[idx];
            float* row = x.data() + idx * plane;
            for (int64_t j = 0; j < plane; ++j) row[j] *= g;
        }
    });
    return x;
}

Tensor mul_broadcast_channel(const Tensor& x, const Tensor& gate) {
    Tensor out = x;
    mul_broadcast_channel_(out, gate);
    return out;
}

}  // namespace tresnet
