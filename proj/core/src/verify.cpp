#include "tresnet/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "tresnet/analysis.hpp"
#include "tresnet/errors.hpp"
#include "tresnet/gradcheck.hpp"
#include "tresnet/image.hpp"
#include "tresnet/layers.hpp"
#include "tresnet/model.hpp"
#include "tresnet/ops.hpp"

namespace tresnet::verify {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

Tensor random_normal(std::vector<int64_t> dims, uint64_t seed, float stddev = 1.0f) {
    Tensor t(std::move(dims));
    std::mt19937_64 eng(seed);
    auto uniform = [&eng] { return static_cast<double>(eng() >> 11) * 0x1.0p-53; };
    for (float& v : t.values()) {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        v = static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                               std::cos(2.0 * 3.14159265358979323846 * u2) * stddev);
    }
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(a.at(i)) - b.at(i)));
    }
    return worst;
}

IabnParams random_iabn(int64_t c, uint64_t seed, float slope) {
    IabnParams p;
    p.gamma = random_normal({c}, seed, 0.5f);
    for (float& v : p.gamma.values()) v += 1.0f;
    p.beta = random_normal({c}, seed + 1, 0.3f);
    p.running_mean = random_normal({c}, seed + 2, 0.5f);
    p.running_var = random_normal({c}, seed + 3, 0.25f);
    for (float& v : p.running_var.values()) v = std::fabs(v) + 0.5f;
    p.slope = slope;
    return p;
}

SeParams random_se(int64_t c, int64_t reduction, uint64_t seed) {
    const int64_t red = std::max<int64_t>(1, (c + reduction / 2) / reduction);
    SeParams p;
    p.w_reduce = random_normal({red, c}, seed, 0.4f);
    p.b_reduce = random_normal({red}, seed + 1, 0.2f);
    p.w_expand = random_normal({c, red}, seed + 2, 0.4f);
    p.b_expand = random_normal({c}, seed + 3, 0.2f);
    p.reduction = reduction;
    return p;
}

// ----------------------------------------------------------------------
// tensor module invariants
// ----------------------------------------------------------------------

void check_inplace_bitwise() {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Tensor x = random_normal({2, 3, 5, 7}, seed);
        Tensor y = random_normal({2, 3, 5, 7}, seed + 100);
        Tensor gate = random_normal({2, 3}, seed + 200);

        Tensor a = add(x, y);
        Tensor xi = x;
        add_(xi, y);
        require(a.bitwise_equal(xi), "add_ differs from add");

        Tensor l = leaky_relu(x, 0.01f);
        Tensor xl = x;
        leaky_relu_(xl, 0.01f);
        require(l.bitwise_equal(xl), "leaky_relu_ differs from leaky_relu");

        Tensor g = mul_broadcast_channel(x, gate);
        Tensor xg = x;
        mul_broadcast_channel_(xg, gate);
        require(g.bitwise_equal(xg), "mul_broadcast_channel_ differs from out-of-place");
        require(g.all_finite() && a.all_finite() && l.all_finite(), "non-finite op output");
    }
}

void check_depthwise_per_channel() {
    const int64_t c = 5;
    Tensor x = random_normal({2, c, 9, 9}, 7);
    ConvParams dw;
    dw.weight = random_normal({c, 1, 3, 3}, 8);
    dw.stride = 2;
    dw.padding = 1;
    dw.groups = c;
    Tensor whole = conv2d(x, dw);

    for (int64_t cc = 0; cc < c; ++cc) {
        Tensor xc({2, 1, 9, 9});
        for (int64_t n = 0; n < 2; ++n) {
            for (int64_t i = 0; i < 81; ++i) {
                xc.at(n * 81 + i) = x.at((n * c + cc) * 81 + i);
            }
        }
        ConvParams single;
        single.weight = Tensor({1, 1, 3, 3});
        for (int64_t i = 0; i < 9; ++i) single.weight.at(i) = dw.weight.at(cc * 9 + i);
        single.stride = 2;
        single.padding = 1;
        Tensor one = conv2d(xc, single);
        for (int64_t n = 0; n < 2; ++n) {
            for (int64_t i = 0; i < one.dim(2) * one.dim(3); ++i) {
                const float got = whole.at((n * c + cc) * one.dim(2) * one.dim(3) + i);
                require(got == one.at(n * one.dim(2) * one.dim(3) + i),
                        "depthwise conv channel " + std::to_string(cc) +
                            " differs from single-channel conv");
            }
        }
    }
}

void check_kernels_vs_naive() {
    Tensor x = random_normal({2, 8, 16, 16}, 11);
    ConvParams p;
    p.weight = random_normal({6, 8, 3, 3}, 12);
    p.bias = random_normal({6}, 13);
    p.stride = 2;
    p.padding = 1;
    require(max_abs_diff(conv2d(x, p), conv2d_reference(x, p)) < 1e-5,
            "conv2d deviates from naive reference path");

    Tensor xf = random_normal({4, 16}, 14);
    Tensor w = random_normal({8, 16}, 15);
    Tensor b = random_normal({8}, 16);
    Tensor got = linear(xf, w, &b);
    for (int64_t n = 0; n < 4; ++n) {
        for (int64_t o = 0; o < 8; ++o) {
            float acc = 0.0f;
            for (int64_t i = 0; i < 16; ++i) acc += xf.at(n, i) * w.at(o, i);
            acc += b.at(o);
            require(std::fabs(got.at(n, o) - acc) < 1e-5, "linear deviates from loop oracle");
        }
    }

    Tensor xp = random_normal({1, 2, 7, 7}, 17);
    Tensor mp = max_pool2d(xp, 3, 2, 1);
    Tensor ap = avg_pool2d(xp, 3, 2);
    for (int64_t c = 0; c < 2; ++c) {
        for (int64_t oh = 0; oh < mp.dim(2); ++oh) {
            for (int64_t ow = 0; ow < mp.dim(3); ++ow) {
                float best = -1e30f;
                for (int64_t r = 0; r < 3; ++r) {
                    for (int64_t s = 0; s < 3; ++s) {
                        const int64_t ih = oh * 2 - 1 + r, iw = ow * 2 - 1 + s;
                        if (ih < 0 || ih >= 7 || iw < 0 || iw >= 7) continue;
                        best = std::max(best, xp.at(0, c, ih, iw));
                    }
                }
                require(std::fabs(mp.at(0, c, oh, ow) - best) < 1e-6,
                        "max_pool2d deviates from loop oracle");
            }
        }
        for (int64_t oh = 0; oh < ap.dim(2); ++oh) {
            for (int64_t ow = 0; ow < ap.dim(3); ++ow) {
                float acc = 0.0f;
                for (int64_t r = 0; r < 3; ++r) {
                    for (int64_t s = 0; s < 3; ++s) acc += xp.at(0, c, oh * 2 + r, ow * 2 + s);
                }
                require(std::fabs(ap.at(0, c, oh, ow) - acc / 9.0f) < 1e-5,
                        "avg_pool2d deviates from loop oracle");
            }
        }
    }
}

void check_pad_reflect_identity() {
    Tensor x = random_normal({1, 2, 6, 5}, 21);
    for (int64_t pad = 1; pad <= 3; ++pad) {
        Tensor padded = pad_reflect(x, pad);
        for (int64_t c = 0; c < 2; ++c) {
            for (int64_t h = 0; h < 6; ++h) {
                for (int64_t w = 0; w < 5; ++w) {
                    require(padded.at(0, c, h + pad, w + pad) == x.at(0, c, h, w),
                            "pad_reflect center-crop is not the identity");
                }
            }
        }
    }
}

void check_conv_linearity() {
    Tensor x = random_normal({1, 4, 8, 8}, 31);
    Tensor y = random_normal({1, 4, 8, 8}, 32);
    ConvParams p;
    p.weight = random_normal({3, 4, 3, 3}, 33);
    p.stride = 1;
    p.padding = 1;
    const float a = 0.7f, b = -1.3f;

    Tensor mixed = x;
    for (int64_t i = 0; i < mixed.numel(); ++i) mixed.at(i) = a * x.at(i) + b * y.at(i);
    Tensor lhs = conv2d(mixed, p);
    Tensor cx = conv2d(x, p);
    Tensor cy = conv2d(y, p);
    for (int64_t i = 0; i < lhs.numel(); ++i) {
        require(std::fabs(lhs.at(i) - (a * cx.at(i) + b * cy.at(i))) < 1e-4,
                "conv2d is not linear within 1e-4");
    }
}

// ----------------------------------------------------------------------
// layers module invariants
// ----------------------------------------------------------------------

void check_s2d_bijection() {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Tensor x = random_normal({2, 3, 8, 12}, seed * 13);
        Tensor packed = space_to_depth(x, 4);
        require(packed.numel() == x.numel(), "space_to_depth changed the element count");
        Tensor back = depth_to_space(packed, 4);
        require(back.bitwise_equal(x), "space_to_depth round trip is not exact");

        std::vector<float> a(x.values().begin(), x.values().end());
        std::vector<float> b(packed.values().begin(), packed.values().end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        require(a == b, "space_to_depth does not preserve the value multiset");
    }
}

void check_blur_kernel() {
    ConvParams p = blur_filter(3);
    require(p.groups == 3 && p.stride == 2 && p.padding == 1 &&
                p.padding_mode == PaddingMode::kReflect && !p.bias,
            "blur_filter geometry wrong");
    for (int64_t c = 0; c < 3; ++c) {
        float sum = 0.0f;
        for (int64_t i = 0; i < 9; ++i) {
            const float v = p.weight.at(c * 9 + i);
            require(v >= 0.0f, "blur kernel has a negative coefficient");
            sum += v;
        }
        require(sum == 1.0f, "blur kernel does not sum to exactly 1 per channel");
        for (int64_t r = 0; r < 3; ++r) {
            for (int64_t s = 0; s < 3; ++s) {
                require(p.weight.at(c, 0, r, s) == p.weight.at(c, 0, 2 - r, s) &&
                            p.weight.at(c, 0, r, s) == p.weight.at(c, 0, r, 2 - s),
                        "blur kernel is not flip-symmetric");
            }
        }
    }
}

void check_aa_bounds() {
    Tensor constant = Tensor::full({1, 4, 10, 10}, 3.0f);
    Tensor down = aa_downsample(constant, 4);
    for (int64_t i = 0; i < down.numel(); ++i) {
        require(down.at(i) == 3.0f, "aa_downsample does not preserve a constant exactly");
    }

    Tensor x = random_normal({2, 3, 12, 12}, 77);
    float lo = x.at(0), hi = x.at(0);
    for (int64_t i = 0; i < x.numel(); ++i) {
        lo = std::min(lo, x.at(i));
        hi = std::max(hi, x.at(i));
    }
    Tensor y = aa_downsample(x, 3);
    for (int64_t i = 0; i < y.numel(); ++i) {
        require(y.at(i) >= lo - 1e-6f && y.at(i) <= hi + 1e-6f,
                "aa_downsample output escapes the input range");
    }
}

void check_iabn_affine_monotone() {
    Tensor x = random_normal({2, 3, 4, 4}, 91);
    IabnParams p = random_iabn(3, 92, /*slope=*/1.0f);
    Tensor y = iabn(x, p);
    for (int64_t n = 0; n < 2; ++n) {
        for (int64_t c = 0; c < 3; ++c) {
            const float inv = 1.0f / std::sqrt(p.running_var.at(c) + p.eps);
            for (int64_t i = 0; i < 16; ++i) {
                const float xv = x.at((n * 3 + c) * 16 + i);
                const float expect = p.gamma.at(c) * (xv - p.running_mean.at(c)) * inv + p.beta.at(c);
                require(std::fabs(y.at((n * 3 + c) * 16 + i) - expect) < 1e-5,
                        "iabn slope=1 is not the pure affine transform");
            }
        }
    }

    p.slope = 0.01f;  // gamma kept positive by random_iabn
    Tensor base = iabn(x, p);
    Tensor bumped = x;
    bumped.at(5) += 0.25f;
    Tensor after = iabn(bumped, p);
    require(after.at(5) >= base.at(5), "iabn is not monotone in its input for gamma >= 0");
}

void check_fast_gap_matches_generic() {
    for (uint64_t seed = 3; seed <= 5; ++seed) {
        Tensor x = random_normal({4, 8, 14, 14}, seed * 101);
        Tensor fast = fast_gap(x, /*flatten=*/false);
        Tensor generic = avg_pool2d(x, 14, 14);
        require(max_abs_diff(fast, generic) < 1e-6, "fast_gap deviates from generic pooling");
    }
}

void check_se_gate_bounded() {
    Tensor x = random_normal({2, 6, 5, 5}, 303);
    for (float& v : x.values()) v += (v >= 0 ? 0.01f : -0.01f);  // keep x away from 0
    SeParams p = random_se(6, 4, 304);
    Tensor y = se_block(x, p);
    for (int64_t i = 0; i < x.numel(); ++i) {
        require(std::fabs(y.at(i)) < std::fabs(x.at(i)),
                "se_block gate is not strictly inside (0,1)");
    }
}

void check_zeroed_block_is_leaky() {
    for (BlockKind kind : {BlockKind::kBasic, BlockKind::kBottleneck}) {
        const int64_t c = kind == BlockKind::kBasic ? 8 : 16;
        BlockParams p = make_block_params(kind, c, c, 1, false, true, 0.01f, 5);
        for (float& v : p.conv1.weight.values()) v = 0.0f;
        for (float& v : p.conv2.weight.values()) v = 0.0f;
        if (p.conv3) {
            for (float& v : p.conv3->weight.values()) v = 0.0f;
        }
        for (float& v : p.iabn1.beta.values()) v = 0.0f;
        for (float& v : p.iabn2.beta.values()) v = 0.0f;
        if (p.iabn3) {
            for (float& v : p.iabn3->beta.values()) v = 0.0f;
        }
        Tensor x = random_normal({1, c, 6, 6}, 404);
        Tensor y = run_block(x, p);
        Tensor expect = leaky_relu(x, 0.01f);
        require(max_abs_diff(y, expect) < 1e-6, "zeroed block does not reduce to leaky_relu");
    }
}

void check_focal_loss_nonnegative() {
    Tensor logits = random_normal({4, 6}, 550, 2.0f);
    Tensor targets({4, 6});
    std::mt19937_64 eng(551);
    for (float& v : targets.values()) v = (eng() & 1) ? 1.0f : 0.0f;
    const double loss = asymmetric_focal_loss(logits, targets, 0.0f, 4.0f);
    require(loss >= 0.0, "focal loss went negative");

    Tensor confident({2, 2}, {30.f, -30.f, -30.f, 30.f});
    Tensor t({2, 2}, {1.f, 0.f, 0.f, 1.f});
    require(asymmetric_focal_loss(confident, t, 1.0f, 2.0f) < 1e-6,
            "focal loss is not near zero at saturated correct predictions");
}

// ----------------------------------------------------------------------
// model module invariants
// ----------------------------------------------------------------------

void check_shape_invariance() {
    // Structural walk across the whole 32k grid, real forwards at the
    // small end (the acceptance suite covers 224/448).
    for (const ModelConfig& cfg :
         {ModelConfig::tresnet_m(), ModelConfig::tresnet_l(), ModelConfig::tresnet_xl()}) {
        Model m = build(cfg, 1);
        for (int64_t k = 2; k <= 14; ++k) {
            const int64_t res = 32 * k;
            CostReport rep = cost_report(m, 1, res);
            int64_t expect = res / 4;
            for (size_t s = 0; s < 4; ++s) {
                if (cfg.stages[s].stride == 2) expect /= 2;
                const std::string tail = "stage" + std::to_string(s + 1) + ".block" +
                                         std::to_string(cfg.stages[s].repeats) + ".act";
                bool found = false;
                for (const CostRow& r : rep.rows) {
                    if (r.name == tail) {
                        found = true;
                        require(r.output_shape[2] == expect && r.output_shape[3] == expect,
                                cfg.variant_name + " stage " + std::to_string(s + 1) +
                                    " output extent != " + std::to_string(expect) + " at " +
                                    std::to_string(res));
                    }
                }
                require(found, "missing stage tail row " + tail);
            }
        }
        Tensor x = random_normal({1, 3, 64, 64}, 606);
        for (float& v : x.values()) v = std::fabs(v) * 0.25f;
        ForwardTrace trace = forward_trace(m, x);
        require(trace.stage_dims[3][2] == 2 && trace.stage_dims[3][3] == 2,
                cfg.variant_name + " forward at 64 did not reach a 2x2 final map");
    }
}

void check_param_counts() {
    // Frozen closed-form counts for the implemented architecture, plus the
    // Table-2 bands where they are attainable (M's published figure is not
    // reachable with the classifier included; the acceptance suite reports
    // that criterion honestly).
    struct Expect {
        ModelConfig cfg;
        int64_t exact;
        double table;
        bool table_attainable;
    };
    const std::vector<Expect> expects = {
        {ModelConfig::tresnet_m(), 30771256, 29.4e6, false},
        {ModelConfig::tresnet_l(), 54643214, 54.7e6, true},
        {ModelConfig::tresnet_xl(), 78167662, 77.1e6, true},
    };
    for (const Expect& e : expects) {
        const int64_t got = count_params(build(e.cfg, 0));
        require(got == e.exact, e.cfg.variant_name + " param count " + std::to_string(got) +
                                    " != closed-form " + std::to_string(e.exact));
        if (e.table_attainable) {
            require(std::fabs(static_cast<double>(got) - e.table) <= 0.02 * e.table,
                    e.cfg.variant_name + " params outside the published +-2% band");
        }
    }
    const int64_t r50 = count_params(build_resnet50_baseline(1000, 0));
    require(r50 == 25557032, "resnet50 param count != closed-form 25557032");
}

void check_build_determinism() {
    Model a = build(ModelConfig::tresnet_m(100), 7);
    Model b = build(ModelConfig::tresnet_m(100), 7);
    auto ta = named_tensors(a);
    auto tb = named_tensors(b);
    require(ta.size() == tb.size(), "named tensor counts differ between identical builds");
    for (size_t i = 0; i < ta.size(); ++i) {
        require(ta[i].name == tb[i].name && ta[i].tensor->bitwise_equal(*tb[i].tensor),
                "tensor " + ta[i].name + " differs between identical builds");
    }

    Tensor x = random_normal({1, 3, 64, 64}, 707);
    for (float& v : x.values()) v = std::fabs(v) * 0.2f;
    Tensor l1 = forward(a, x);
    Tensor l2 = forward(a, x);
    require(l1.bitwise_equal(l2), "forward is not bitwise deterministic");
}

void check_se_placement() {
    Model m = build(ModelConfig::tresnet_m(10), 3);
    for (size_t s = 0; s < 3; ++s) {
        for (const BlockParams& blk : m.stages[s]) {
            require(blk.se.has_value(),
                    "stage " + std::to_string(s + 1) + " block missing SE parameters");
        }
    }
    for (const BlockParams& blk : m.stages[3]) {
        require(!blk.se.has_value(), "stage 4 block unexpectedly has SE parameters");
    }
}

void check_block_kind_placement() {
    Model m = build(ModelConfig::tresnet_l(10), 3);
    for (size_t s = 0; s < 4; ++s) {
        const BlockKind expect = s < 2 ? BlockKind::kBasic : BlockKind::kBottleneck;
        for (const BlockParams& blk : m.stages[s]) {
            require(blk.kind == expect, "stage " + std::to_string(s + 1) + " has wrong block kind");
        }
    }
}

// ----------------------------------------------------------------------
// gradcheck module invariants
// ----------------------------------------------------------------------

constexpr double kFdStep = 1e-3;
constexpr double kGradTol = 1e-3;

double projected(const Tensor& out, const Tensor& weights) {
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) {
        acc += static_cast<double>(out.at(i)) * weights.at(i);
    }
    return acc;
}

// Central differences straddle the LeakyReLU kink when a pre-activation
// sits within the step; push such points away (kink exclusion).
void nudge_off_iabn_kink(Tensor& x, const IabnParams& p) {
    const int64_t n = x.dim(0), c = x.dim(1);
    const int64_t plane = x.dim(2) * x.dim(3);
    for (int64_t cc = 0; cc < c; ++cc) {
        const float inv = 1.0f / std::sqrt(p.running_var.at(cc) + p.eps);
        const float scale = p.gamma.at(cc) * inv;
        const float margin = 10.0f * static_cast<float>(kFdStep) * (1.0f + std::fabs(scale));
        for (int64_t nn = 0; nn < n; ++nn) {
            for (int64_t i = 0; i < plane; ++i) {
                float& v = x.at((nn * c + cc) * plane + i);
                float pre = p.gamma.at(cc) * (v - p.running_mean.at(cc)) * inv + p.beta.at(cc);
                while (std::fabs(pre) <= margin) {
                    v += 0.5f;
                    pre = p.gamma.at(cc) * (v - p.running_mean.at(cc)) * inv + p.beta.at(cc);
                }
            }
        }
    }
}

void check_novel_layer_gradients() {
    const std::vector<std::vector<int64_t>> shapes = {{2, 4, 6, 6}, {1, 3, 8, 8}, {3, 2, 4, 6}};
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        for (const auto& dims : shapes) {
            const int64_t c = dims[1];
            Tensor x = random_normal(dims, seed * 1000 + c);

            {  // iabn input gradient at kink-safe points
                IabnParams p = random_iabn(c, seed * 1000 + 1, 0.01f);
                Tensor xs = x;
                nudge_off_iabn_kink(xs, p);
                Tensor w = random_normal(dims, seed * 1000 + 2);
                auto grads = gradcheck::backward_iabn(xs, p, w);
                Tensor fd = gradcheck::finite_difference(
                    [&](const Tensor& probe) { return projected(iabn(probe, p), w); }, xs, kFdStep);
                auto res = gradcheck::compare_gradients(grads.input, fd);
                require(res.max_rel_error < kGradTol,
                        "iabn input gradient rel error " + std::to_string(res.max_rel_error));
            }
            {  // aa downsample
                Tensor w_shape = aa_downsample(x, c);
                Tensor w = random_normal(w_shape.dims(), seed * 1000 + 3);
                Tensor analytic = gradcheck::backward_aa(w, c, dims);
                Tensor fd = gradcheck::finite_difference(
                    [&](const Tensor& probe) { return projected(aa_downsample(probe, c), w); }, x,
                    kFdStep);
                auto res = gradcheck::compare_gradients(analytic, fd);
                require(res.max_rel_error < kGradTol,
                        "aa gradient rel error " + std::to_string(res.max_rel_error));
            }
            {  // se block (input)
                SeParams p = random_se(c, 4, seed * 1000 + 4);
                Tensor w = random_normal(dims, seed * 1000 + 5);
                auto grads = gradcheck::backward_se(x, p, w);
                Tensor fd = gradcheck::finite_difference(
                    [&](const Tensor& probe) { return projected(se_block(probe, p), w); }, x,
                    kFdStep);
                auto res = gradcheck::compare_gradients(grads.input, fd);
                require(res.max_rel_error < kGradTol,
                        "se input gradient rel error " + std::to_string(res.max_rel_error));
            }
            {  // gap
                Tensor w = random_normal({dims[0], c}, seed * 1000 + 6);
                Tensor analytic = gradcheck::backward_gap(w, dims);
                Tensor fd = gradcheck::finite_difference(
                    [&](const Tensor& probe) { return projected(fast_gap(probe, true), w); }, x,
                    kFdStep);
                auto res = gradcheck::compare_gradients(analytic, fd);
                require(res.max_rel_error < kGradTol,
                        "gap gradient rel error " + std::to_string(res.max_rel_error));
            }
        }
    }
}

void check_permutation_exact() {
    Tensor x = random_normal({2, 2, 8, 8}, 42);
    Tensor w = random_normal({2, 32, 2, 2}, 43);
    Tensor analytic = gradcheck::backward_space_to_depth(w, 4);
    Tensor fd = gradcheck::finite_difference(
        [&](const Tensor& probe) { return projected(space_to_depth(probe, 4), w); }, x, kFdStep);
    auto res = gradcheck::compare_gradients(analytic, fd);
    require(res.max_abs_error == 0.0, "permutation gradient error is not exactly zero");
}

void check_kink_exclusion() {
    // At pre-activation magnitudes > 10h the LeakyReLU kink cannot flip a
    // central difference; the gradient must agree tightly there.
    const std::vector<int64_t> dims = {2, 3, 4, 4};
    IabnParams p = random_iabn(3, 99, 0.01f);
    Tensor x = random_normal(dims, 98);
    nudge_off_iabn_kink(x, p);
    Tensor w = random_normal(dims, 97);
    auto grads = gradcheck::backward_iabn(x, p, w);
    Tensor fd = gradcheck::finite_difference(
        [&](const Tensor& probe) { return projected(iabn(probe, p), w); }, x, kFdStep);
    auto res = gradcheck::compare_gradients(grads.input, fd);
    require(res.max_rel_error < kGradTol, "kink-safe iabn gradient check failed");
}

void check_loss_gradient() {
    Tensor logits = random_normal({3, 5}, 81, 1.5f);
    Tensor targets({3, 5});
    std::mt19937_64 eng(82);
    for (float& v : targets.values()) v = (eng() & 1) ? 1.0f : 0.0f;

    Tensor analytic = gradcheck::backward_focal(logits, targets, 0.5f, 4.0f);
    Tensor fd = gradcheck::finite_difference(
        [&](const Tensor& probe) {
            return asymmetric_focal_loss(probe, targets, 0.5f, 4.0f);
        },
        logits, kFdStep);
    auto res = gradcheck::compare_gradients(analytic, fd);
    require(res.max_rel_error < kGradTol,
            "focal loss gradient rel error " + std::to_string(res.max_rel_error));

    double sum = 0.0;
    for (int64_t i = 0; i < analytic.numel(); ++i) sum += std::fabs(analytic.at(i));
    require(std::isfinite(sum) && sum < 1e3, "loss gradient magnitude unbounded");

    Tensor confident({1, 2}, {35.f, -35.f});
    Tensor t({1, 2}, {1.f, 0.f});
    Tensor g = gradcheck::backward_focal(confident, t, 1.0f, 2.0f);
    require(std::fabs(g.at(0)) < 1e-6 && std::fabs(g.at(1)) < 1e-6,
            "loss gradient not ~zero at saturated correct predictions");
}

// ----------------------------------------------------------------------
// analysis module invariants
// ----------------------------------------------------------------------

void check_params_manifest_consistency() {
    Model m = build(ModelConfig::tresnet_m(10), 5);
    int64_t learnable = 0;
    for (const NamedTensorView& t : named_tensors(m)) {
        if (t.learnable) learnable += t.tensor->numel();
    }
    require(count_params(m) == learnable,
            "count_params disagrees with the manifest's learnable entries");
}

void check_mac_scaling() {
    for (const ModelConfig& cfg :
         {ModelConfig::tresnet_m(), ModelConfig::tresnet_l(), ModelConfig::tresnet_xl()}) {
        Model m = build(cfg, 0);
        const double ratio = static_cast<double>(count_macs(m, 448)) /
                             static_cast<double>(count_macs(m, 224));
        require(ratio >= 3.9 && ratio <= 4.1,
                cfg.variant_name + " macs(448)/macs(224) = " + std::to_string(ratio) +
                    " outside [3.9, 4.1]");
    }
}

void check_memory_monotonicity() {
    Model m = build(ModelConfig::tresnet_m(10), 5);
    for (bool inplace : {true, false}) {
        const int64_t b1 = estimate_activation_memory(m, 1, 224, inplace, true);
        const int64_t b2 = estimate_activation_memory(m, 2, 224, inplace, true);
        const int64_t r448 = estimate_activation_memory(m, 1, 448, inplace, true);
        const int64_t infer = estimate_activation_memory(m, 1, 224, inplace, false);
        require(b2 >= b1, "training memory not monotone in batch");
        require(r448 >= b1, "training memory not monotone in resolution");
        require(b1 >= infer, "training memory below inference peak");

        const int64_t i1 = estimate_activation_memory(m, 1, 224, inplace, false);
        const int64_t i2 = estimate_activation_memory(m, 2, 224, inplace, false);
        require(i2 >= i1, "inference peak not monotone in batch");
    }
}

// ----------------------------------------------------------------------
// cli module invariants
// ----------------------------------------------------------------------

void check_deterministic_outputs() {
    Model m = build(ModelConfig::tresnet_m(10), 9);
    const std::string a = cost_report(m, 1, 224).to_json();
    const std::string b = cost_report(m, 1, 224).to_json();
    require(a == b, "cost report JSON is not reproducible");

    Tensor x = random_normal({1, 3, 64, 64}, 909);
    for (float& v : x.values()) v = std::fabs(v) * 0.2f;
    require(forward(m, x).bitwise_equal(forward(m, x)), "forward results differ across runs");
}

void check_preprocess_exact() {
    ImageInput img;
    img.width = 2;
    img.height = 1;
    img.pixels = {255, 255, 255, 0, 0, 0};
    Tensor t = image_to_tensor(img);
    for (int64_t c = 0; c < 3; ++c) {
        require(t.at(0, c, 0, 0) == 1.0f, "pixel 255 does not map to exactly 1.0");
        require(t.at(0, c, 0, 1) == 0.0f, "pixel 0 does not map to exactly 0.0");
    }
}

void check_registry_audit();  // defined after the registry

const std::map<std::string, int>& expected_counts() {
    static const std::map<std::string, int> counts = {{"tensor", 5}, {"layers", 8}, {"model", 5},
                                                      {"gradcheck", 4}, {"analysis", 3}, {"cli", 3}};
    return counts;
}

}  // namespace

const std::vector<PropertyCheck>& property_registry() {
    static const std::vector<PropertyCheck> registry = {
        {"tensor", "inplace-bitwise-equivalence", check_inplace_bitwise},
        {"tensor", "depthwise-equals-per-channel", check_depthwise_per_channel},
        {"tensor", "kernels-match-naive-oracle", check_kernels_vs_naive},
        {"tensor", "pad-reflect-crop-identity", check_pad_reflect_identity},
        {"tensor", "conv2d-linearity", check_conv_linearity},
        {"layers", "space-to-depth-bijection", check_s2d_bijection},
        {"layers", "blur-kernel-normalized-symmetric", check_blur_kernel},
        {"layers", "aa-downsample-dc-and-bounds", check_aa_bounds},
        {"layers", "iabn-affine-and-monotone", check_iabn_affine_monotone},
        {"layers", "fast-gap-equals-generic-pool", check_fast_gap_matches_generic},
        {"layers", "se-gate-strictly-bounded", check_se_gate_bounded},
        {"layers", "zeroed-block-reduces-to-leaky-relu", check_zeroed_block_is_leaky},
        {"layers", "focal-loss-nonnegative", check_focal_loss_nonnegative},
        {"model", "shape-invariance-over-resolutions", check_shape_invariance},
        {"model", "param-counts", check_param_counts},
        {"model", "build-determinism", check_build_determinism},
        {"model", "se-placement", check_se_placement},
        {"model", "block-kind-placement", check_block_kind_placement},
        {"gradcheck", "novel-layer-gradients", check_novel_layer_gradients},
        {"gradcheck", "permutation-zero-error", check_permutation_exact},
        {"gradcheck", "kink-exclusion", check_kink_exclusion},
        {"gradcheck", "loss-gradient-bounded-and-saturating", check_loss_gradient},
        {"analysis", "params-match-manifest", check_params_manifest_consistency},
        {"analysis", "macs-quadratic-resolution-scaling", check_mac_scaling},
        {"analysis", "memory-estimate-monotonicity", check_memory_monotonicity},
        {"cli", "deterministic-printed-results", check_deterministic_outputs},
        {"cli", "preprocess-exact-range", check_preprocess_exact},
        {"cli", "registry-audit", check_registry_audit},
    };
    return registry;
}

namespace {

void check_registry_audit() {
    std::map<std::string, int> got;
    for (const PropertyCheck& c : property_registry()) got[c.module]++;
    for (const auto& [module, expected] : expected_counts()) {
        const auto it = got.find(module);
        require(it != got.end() && it->second == expected,
                "registry lists " + std::to_string(it == got.end() ? 0 : it->second) +
                    " checks for module " + module + ", spec lists " + std::to_string(expected));
    }
    require(got.size() == expected_counts().size(), "registry has unexpected modules");
}

}  // namespace

VerifySummary run_verify(const std::optional<std::string>& module_filter, std::ostream& out) {
    if (module_filter) {
        if (expected_counts().find(*module_filter) == expected_counts().end()) {
            throw ValidationError("unknown verify module '" + *module_filter +
                                  "' (expected tensor|layers|model|gradcheck|analysis|cli)");
        }
    }

    VerifySummary summary;
    for (const PropertyCheck& check : property_registry()) {
        if (module_filter && check.module != *module_filter) continue;
        CheckOutcome outcome;
        outcome.module = check.module;
        outcome.name = check.name;
        try {
            check.run();
            outcome.passed = true;
            ++summary.passed;
        } catch (const std::exception& e) {
            outcome.passed = false;
            outcome.message = e.what();
            ++summary.failed;
        }
        out << (outcome.passed ? "[ ok ] " : "[FAIL] ") << outcome.module << "/" << outcome.name;
        if (!outcome.passed) out << ": " << outcome.message;
        out << "\n";
        summary.outcomes.push_back(std::move(outcome));
    }
    out << summary.passed << " passed, " << summary.failed << " failed\n";
    return summary;
}

}  // namespace tresnet::verify
