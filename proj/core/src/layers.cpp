#include "tresnet/layers.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "tresnet/errors.hpp"
#include "tresnet/runtime.hpp"

namespace tresnet {

namespace testhook {
namespace {
std::atomic<float> g_blur_scale{1.0f};
}
void set_blur_kernel_scale(float scale) { g_blur_scale.store(scale); }
float blur_kernel_scale() { return g_blur_scale.load(); }
}  // namespace testhook

namespace {

void require_rank4(const Tensor& x, const char* what) {
    if (x.rank() != 4) {
        throw DimensionError(std::string(what) + " expects a rank-4 tensor, got " + x.shape_str());
    }
}

}  // namespace

Tensor space_to_depth(const Tensor& x, int64_t block) {
    require_rank4(x, "space_to_depth");
    if (block < 1) throw ValidationError("space_to_depth block must be >= 1");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % block != 0) {
        throw DimensionError("space_to_depth axis 2 (H=" + std::to_string(h) +
                             ") not divisible by block " + std::to_string(block));
    }
    if (w % block != 0) {
        throw DimensionError("space_to_depth axis 3 (W=" + std::to_string(w) +
                             ") not divisible by block " + std::to_string(block));
    }
    const int64_t ho = h / block, wo = w / block, co = c * block * block;

    // out[n][(h_off*block + w_off)*C + c][ho][wo] = x[n][c][ho*block+h_off][wo*block+w_off]
    Tensor out({n, co, ho, wo});
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const int64_t nn = idx / c;
            const int64_t cc = idx % c;
            for (int64_t hh = 0; hh < h; ++hh) {
                const int64_t h_off = hh % block;
                const int64_t oh = hh / block;
                const float* src = x.data() + ((nn * c + cc) * h + hh) * w;
                for (int64_t ww = 0; ww < w; ++ww) {
                    const int64_t k = (h_off * block + ww % block) * c + cc;
                    out.at(nn, k, oh, ww / block) = src[ww];
                }
            }
        }
    });
    return out;
}

Tensor depth_to_space(const Tensor& x, int64_t block) {
    require_rank4(x, "depth_to_space");
    if (block < 1) throw ValidationError("depth_to_space block must be >= 1");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c % (block * block) != 0) {
        throw DimensionError("depth_to_space axis 1 (C=" + std::to_string(c) +
                             ") not divisible by block^2 = " + std::to_string(block * block));
    }
    const int64_t co = c / (block * block);
    Tensor out({n, co, h * block, w * block});
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const int64_t nn = idx / c;
            const int64_t k = idx % c;
            const int64_t cc = k % co;
            const int64_t h_off = (k / co) / block;
            const int64_t w_off = (k / co) % block;
            for (int64_t oh = 0; oh < h; ++oh) {
                const float* src = x.data() + ((nn * c + k) * h + oh) * w;
                for (int64_t ow = 0; ow < w; ++ow) {
                    out.at(nn, cc, oh * block + h_off, ow * block + w_off) = src[ow];
                }
            }
        }
    });
    return out;
}

ConvParams blur_filter(int64_t channels) {
    if (channels < 1) throw ValidationError("blur_filter channels must be >= 1");
    // outer([1,2,1],[1,2,1]) / 16, replicated per channel
    const float scale = testhook::blur_kernel_scale();
    const float base[9] = {1.f, 2.f, 1.f, 2.f, 4.f, 2.f, 1.f, 2.f, 1.f};
    std::vector<float> w(static_cast<size_t>(channels) * 9);
    for (int64_t c = 0; c < channels; ++c) {
        for (int i = 0; i < 9; ++i) w[static_cast<size_t>(c * 9 + i)] = base[i] / 16.0f * scale;
    }
    ConvParams p;
    p.weight = Tensor({channels, 1, 3, 3}, std::move(w));
    p.stride = 2;
    p.padding = 1;
    p.padding_mode = PaddingMode::kReflect;
    p.groups = channels;
    return p;
}

Tensor aa_downsample(const Tensor& x, int64_t channels) {
    require_rank4(x, "aa_downsample");
    if (x.dim(1) != channels) {
        throw DimensionError("aa_downsample axis 1 (channels) mismatch: input has " +
                             std::to_string(x.dim(1)) + ", expected " + std::to_string(channels));
    }
    if (x.dim(2) < 2 || x.dim(3) < 2) {
        throw DimensionError("aa_downsample needs spatial extents >= 2, got " + x.shape_str());
    }
    return conv2d(x, blur_filter(channels));
}

namespace {

struct IabnScale {
    std::vector<float> scale;
    std::vector<float> shift;
};

IabnScale resolve_iabn(const Tensor& x, const IabnParams& p) {
    require_rank4(x, "iabn");
    const int64_t c = x.dim(1);
    auto check_vec = [c](const Tensor& t, const char* name) {
        if (t.rank() != 1 || t.dim(0) != c) {
            throw DimensionError(std::string("iabn ") + name + " must have shape (" +
                                 std::to_string(c) + "), got " + t.shape_str());
        }
    };
    check_vec(p.gamma, "gamma");
    check_vec(p.beta, "beta");
    check_vec(p.running_mean, "running_mean");
    check_vec(p.running_var, "running_var");
    if (!(p.eps > 0.0f)) throw ParameterError("iabn eps must be > 0");
    if (p.slope < 0.0f) throw ParameterError("iabn slope must be >= 0");

    IabnScale s;
    s.scale.resize(static_cast<size_t>(c));
    s.shift.resize(static_cast<size_t>(c));
    for (int64_t i = 0; i < c; ++i) {
        const float var = p.running_var.at(i);
        if (var < 0.0f) {
            throw ParameterError("iabn running_var[" + std::to_string(i) + "] is negative");
        }
        const float sc = p.gamma.at(i) / std::sqrt(var + p.eps);
        s.scale[static_cast<size_t>(i)] = sc;
        s.shift[static_cast<size_t>(i)] = p.beta.at(i) - p.running_mean.at(i) * sc;
    }
    return s;
}

}  // namespace

Tensor& iabn_(Tensor& x, const IabnParams& p) {
    const IabnScale s = resolve_iabn(x, p);
    const int64_t n = x.dim(0), c = x.dim(1);
    const int64_t plane = x.dim(2) * x.dim(3);
    const float slope = p.slope;
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const float sc = s.scale[static_cast<size_t>(idx % c)];
            const float sh = s.shift[static_cast<size_t>(idx % c)];
            float* row = x.data() + idx * plane;
            for (int64_t j = 0; j < plane; ++j) {
                const float v = row[j] * sc + sh;
                row[j] = v >= 0.0f ? v : slope * v;
            }
        }
    });
    return x;
}

Tensor iabn(const Tensor& x, const IabnParams& p) {
    Tensor out = x;
    iabn_(out, p);
    return out;
}

Tensor fast_gap(const Tensor& x, bool flatten) {
    require_rank4(x, "fast_gap");
    const int64_t n = x.dim(0), c = x.dim(1);
    const int64_t plane = x.dim(2) * x.dim(3);
    const float inv = 1.0f / static_cast<float>(plane);

    Tensor out(flatten ? std::vector<int64_t>{n, c} : std::vector<int64_t>{n, c, 1, 1});
    runtime::parallel_for(0, n * c, [&](int64_t b0, int64_t b1) {
        for (int64_t idx = b0; idx < b1; ++idx) {
            const float* row = x.data() + idx * plane;
            float a0 = 0.f, a1 = 0.f, a2 = 0.f, a3 = 0.f;
            int64_t j = 0;
            for (; j + 4 <= plane; j += 4) {
                a0 += row[j];
                a1 += row[j + 1];
                a2 += row[j + 2];
                a3 += row[j + 3];
            }
            float acc = (a0 + a1) + (a2 + a3);
            for (; j < plane; ++j) acc += row[j];
            out.data()[idx] = acc * inv;
        }
    });
    return out;
}

namespace {

Tensor se_gate(const Tensor& x, const SeParams& p) {
    const int64_t c = x.dim(1);
    if (p.w_reduce.rank() != 2 || p.w_reduce.dim(1) != c || p.w_expand.rank() != 2 ||
        p.w_expand.dim(0) != c || p.w_expand.dim(1) != p.w_reduce.dim(0)) {
        throw DimensionError("se_block projections inconsistent with " + std::to_string(c) +
                             " channels: w_reduce " + p.w_reduce.shape_str() + ", w_expand " +
                             p.w_expand.shape_str());
    }
    Tensor squeezed = fast_gap(x, /*flatten=*/true);
    Tensor hidden = linear(squeezed, p.w_reduce, &p.b_reduce);
    leaky_relu_(hidden, 0.0f);
    return sigmoid(linear(hidden, p.w_expand, &p.b_expand));
}

}  // namespace

Tensor se_block(const Tensor& x, const SeParams& p) {
    require_rank4(x, "se_block");
    return mul_broadcast_channel(x, se_gate(x, p));
}

Tensor& se_block_(Tensor& x, const SeParams& p) {
    require_rank4(x, "se_block");
    return mul_broadcast_channel_(x, se_gate(x, p));
}

namespace {

Tensor shortcut_branch(const Tensor& x, const BlockParams& p, bool inplace) {
    if (!p.downsample) return x;
    Tensor sc = conv2d(x, p.downsample->conv);
    if (inplace) {
        iabn_(sc, p.downsample->iabn);
        return sc;
    }
    return iabn(sc, p.downsample->iabn);
}

Tensor finish_block(Tensor&& main, const Tensor& shortcut, float slope, bool inplace) {
    if (inplace) {
        add_(main, shortcut);
        leaky_relu_(main, slope);
        return std::move(main);
    }
    Tensor summed = add(main, shortcut);
    return leaky_relu(summed, slope);
}

}  // namespace

Tensor basic_block(const Tensor& x, const BlockParams& p, bool inplace) {
    if (p.kind != BlockKind::kBasic) throw ValidationError("basic_block given non-Basic params");

    Tensor main = conv2d(x, p.conv1);
    if (p.stride == 2 && p.use_aa) main = aa_downsample(main, main.dim(1));
    if (inplace) iabn_(main, p.iabn1); else main = iabn(main, p.iabn1);

    main = conv2d(main, p.conv2);
    if (inplace) iabn_(main, p.iabn2); else main = iabn(main, p.iabn2);

    if (p.se) {
        if (inplace) se_block_(main, *p.se); else main = se_block(main, *p.se);
    }

    Tensor shortcut = shortcut_branch(x, p, inplace);
    return finish_block(std::move(main), p.downsample ? shortcut : x, p.slope, inplace);
}

Tensor bottleneck_block(const Tensor& x, const BlockParams& p, bool inplace) {
    if (p.kind != BlockKind::kBottleneck) {
        throw ValidationError("bottleneck_block given non-Bottleneck params");
    }
    if (!p.conv3 || !p.iabn3) {
        throw ValidationError("bottleneck_block params missing the expand conv/iabn");
    }

    Tensor main = conv2d(x, p.conv1);
    if (inplace) iabn_(main, p.iabn1); else main = iabn(main, p.iabn1);

    main = conv2d(main, p.conv2);
    if (p.stride == 2 && p.use_aa) main = aa_downsample(main, main.dim(1));
    if (inplace) iabn_(main, p.iabn2); else main = iabn(main, p.iabn2);

    if (p.se) {
        if (inplace) se_block_(main, *p.se); else main = se_block(main, *p.se);
    }

    main = conv2d(main, *p.conv3);
    if (inplace) iabn_(main, *p.iabn3); else main = iabn(main, *p.iabn3);

    Tensor shortcut = shortcut_branch(x, p, inplace);
    return finish_block(std::move(main), p.downsample ? shortcut : x, p.slope, inplace);
}

Tensor run_block(const Tensor& x, const BlockParams& p, bool inplace) {
    return p.kind == BlockKind::kBasic ? basic_block(x, p, inplace)
                                       : bottleneck_block(x, p, inplace);
}

double asymmetric_focal_loss(const Tensor& logits, const Tensor& targets,
                             float gamma_pos, float gamma_neg) {
    if (logits.rank() != 2) {
        throw DimensionError("asymmetric_focal_loss logits expect rank 2 (N,K), got " +
                             logits.shape_str());
    }
    if (!logits.same_shape(targets)) {
        throw DimensionError("asymmetric_focal_loss shape mismatch: logits " + logits.shape_str() +
                             " vs targets " + targets.shape_str());
    }
    if (gamma_pos < 0.0f || gamma_neg < 0.0f) {
        throw ValidationError("asymmetric_focal_loss gammas must be >= 0");
    }

    constexpr double kProbEps = 1e-7;
    const int64_t n = logits.numel();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const float y = targets.at(i);
        if (y != 0.0f && y != 1.0f) {
            throw ValidationError("asymmetric_focal_loss targets must be exactly 0 or 1, got " +
                                  std::to_string(y) + " at index " + std::to_string(i));
        }
        double pr = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.at(i))));
        pr = std::min(1.0 - kProbEps, std::max(kProbEps, pr));
        if (y == 1.0f) {
            total -= std::pow(1.0 - pr, static_cast<double>(gamma_pos)) * std::log(pr);
        } else {
            total -= std::pow(pr, static_cast<double>(gamma_neg)) * std::log(1.0 - pr);
        }
    }
    return total / static_cast<double>(n);
}

}  // namespace tresnet
