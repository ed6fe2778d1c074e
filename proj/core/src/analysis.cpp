#include "tresnet/analysis.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tresnet/errors.hpp"

namespace tresnet {

namespace {

struct CostWalker {
    int64_t batch;
    int64_t bpe;
    bool inplace;
    std::vector<CostRow> rows;

    int64_t map_bytes(int64_t c, int64_t h, int64_t w) const { return batch * c * h * w * bpe; }

    CostRow& emit(const std::string& name, std::vector<int64_t> shape, int64_t params,
                  int64_t macs, int64_t live_bytes, int64_t retained_bytes) {
        rows.push_back(CostRow{name, std::move(shape), params, macs, retained_bytes, live_bytes});
        return rows.back();
    }

    // Full-map op that always allocates its output.
    void alloc_op(const std::string& name, int64_t c, int64_t h, int64_t w, int64_t params,
                  int64_t macs, int64_t other_live) {
        const int64_t out = map_bytes(c, h, w);
        emit(name, {batch, c, h, w}, params, macs, other_live + out, out);
    }

    // Op that overwrites its input when in-place execution is enabled.
    void inplace_op(const std::string& name, int64_t c, int64_t h, int64_t w, int64_t params,
                    int64_t macs, int64_t other_live) {
        const int64_t out = map_bytes(c, h, w);
        const int64_t alloc = inplace ? 0 : out;
        emit(name, {batch, c, h, w}, params, macs, other_live + alloc, alloc);
    }
};

int64_t iabn_params(int64_t c) { return 2 * c; }  // gamma + beta; running stats not learnable

int64_t se_param_count(const SeParams& se) {
    return se.w_reduce.numel() + se.b_reduce.numel() + se.w_expand.numel() + se.b_expand.numel();
}

// gap + two projections + relu + sigmoid + channel multiply, per batch element.
int64_t se_macs(int64_t c, int64_t red, int64_t plane) {
    return c * plane + c * red + red + red * c + c + c * plane;
}

void walk_block(CostWalker& wk, const std::string& prefix, const BlockParams& blk, int64_t in_ch,
                int64_t h_in, int64_t w_in, int64_t& h_out, int64_t& w_out) {
    const bool s2 = blk.stride == 2;
    h_out = s2 ? h_in / 2 : h_in;
    w_out = s2 ? w_in / 2 : w_in;
    const bool aa = s2 && blk.use_aa;
    const int64_t n = wk.batch;

    const int64_t x_b = wk.map_bytes(in_ch, h_in, w_in);
    int64_t main_b = 0;

    auto conv_macs = [&](const ConvParams& c, int64_t oh, int64_t ow) {
        return n * c.out_channels() * oh * ow * (c.in_channels() / c.groups) * c.kernel_h() *
               c.kernel_w();
    };

    int64_t out_ch;
    if (blk.kind == BlockKind::kBasic) {
        out_ch = blk.conv1.out_channels();
        const int64_t h1 = aa ? h_in : h_out, w1 = aa ? w_in : w_out;
        wk.alloc_op(prefix + "conv1", out_ch, h1, w1, blk.conv1.weight.numel(),
                    conv_macs(blk.conv1, h1, w1), x_b);
        main_b = wk.map_bytes(out_ch, h1, w1);
        if (aa) {
            wk.alloc_op(prefix + "conv1.aa", out_ch, h_out, w_out, 0,
                        n * out_ch * h_out * w_out * 9, x_b + main_b);
            main_b = wk.map_bytes(out_ch, h_out, w_out);
        }
        wk.inplace_op(prefix + "iabn1", out_ch, h_out, w_out, iabn_params(out_ch),
                      n * out_ch * h_out * w_out, x_b + main_b);
        wk.alloc_op(prefix + "conv2", out_ch, h_out, w_out, blk.conv2.weight.numel(),
                    conv_macs(blk.conv2, h_out, w_out), x_b + main_b);
        main_b = wk.map_bytes(out_ch, h_out, w_out);
        wk.inplace_op(prefix + "iabn2", out_ch, h_out, w_out, iabn_params(out_ch),
                      n * out_ch * h_out * w_out, x_b + main_b);
    } else {
        out_ch = blk.conv3->out_channels();
        const int64_t planes = blk.conv1.out_channels();
        wk.alloc_op(prefix + "conv1", planes, h_in, w_in, blk.conv1.weight.numel(),
                    conv_macs(blk.conv1, h_in, w_in), x_b);
        main_b = wk.map_bytes(planes, h_in, w_in);
        wk.inplace_op(prefix + "iabn1", planes, h_in, w_in, iabn_params(planes),
                      n * planes * h_in * w_in, x_b + main_b);
        const int64_t h2 = aa ? h_in : h_out, w2 = aa ? w_in : w_out;
        wk.alloc_op(prefix + "conv2", planes, h2, w2, blk.conv2.weight.numel(),
                    conv_macs(blk.conv2, h2, w2), x_b + main_b);
        main_b = wk.map_bytes(planes, h2, w2);
        if (aa) {
            wk.alloc_op(prefix + "conv2.aa", planes, h_out, w_out, 0,
                        n * planes * h_out * w_out * 9, x_b + main_b);
            main_b = wk.map_bytes(planes, h_out, w_out);
        }
        wk.inplace_op(prefix + "iabn2", planes, h_out, w_out, iabn_params(planes),
                      n * planes * h_out * w_out, x_b + main_b);
        if (blk.se) {
            const int64_t red = blk.se->w_reduce.dim(0);
            const int64_t internals = n * (3 * planes + red) * wk.bpe;
            const int64_t alloc = (wk.inplace ? 0 : main_b) + internals;
            wk.emit(prefix + "se", {n, planes, h_out, w_out}, se_param_count(*blk.se),
                    n * se_macs(planes, red, h_out * w_out), x_b + main_b + alloc, alloc);
        }
        wk.alloc_op(prefix + "conv3", out_ch, h_out, w_out, blk.conv3->weight.numel(),
                    conv_macs(*blk.conv3, h_out, w_out), x_b + main_b);
        main_b = wk.map_bytes(out_ch, h_out, w_out);
        wk.inplace_op(prefix + "iabn3", out_ch, h_out, w_out, iabn_params(out_ch),
                      n * out_ch * h_out * w_out, x_b + main_b);
    }

    if (blk.kind == BlockKind::kBasic && blk.se) {
        const int64_t red = blk.se->w_reduce.dim(0);
        const int64_t internals = n * (3 * out_ch + red) * wk.bpe;
        const int64_t alloc = (wk.inplace ? 0 : main_b) + internals;
        wk.emit(prefix + "se", {n, out_ch, h_out, w_out}, se_param_count(*blk.se),
                n * se_macs(out_ch, red, h_out * w_out), x_b + main_b + alloc, alloc);
    }

    int64_t shortcut_b = x_b;
    if (blk.downsample) {
        wk.alloc_op(prefix + "downsample.conv", out_ch, h_out, w_out,
                    blk.downsample->conv.weight.numel(),
                    conv_macs(blk.downsample->conv, h_out, w_out), x_b + main_b);
        shortcut_b = wk.map_bytes(out_ch, h_out, w_out);
        // the shortcut conv was the block input's last reader
        wk.inplace_op(prefix + "downsample.iabn", out_ch, h_out, w_out, iabn_params(out_ch),
                      n * out_ch * h_out * w_out, main_b + shortcut_b);
    }
    wk.inplace_op(prefix + "add", out_ch, h_out, w_out, 0, n * out_ch * h_out * w_out,
                  main_b + shortcut_b);
    wk.inplace_op(prefix + "act", out_ch, h_out, w_out, 0, n * out_ch * h_out * w_out, main_b);
}

CostWalker walk_model(const Model& m, int64_t batch, int64_t resolution,
                      const CostAssumptions& as) {
    if (resolution % 32 != 0 || resolution < 32) {
        throw DimensionError("analysis resolution must be a positive multiple of 32, got " +
                             std::to_string(resolution));
    }
    CostWalker wk{batch, as.bytes_per_element, as.inplace_enabled, {}};
    const int64_t n = batch;

    wk.alloc_op("input", 3, resolution, resolution, 0, 0, 0);
    int64_t h, w, ch;
    if (m.config.stem_kind == StemKind::kSpaceToDepth) {
        h = resolution / 4, w = resolution / 4;
        const int64_t in_b = wk.map_bytes(3, resolution, resolution);
        wk.alloc_op("stem.s2d", 48, h, w, 0, 0, in_b);
        const int64_t s2d_b = wk.map_bytes(48, h, w);
        ch = m.stem.conv.out_channels();
        wk.alloc_op("stem.conv", ch, h, w, m.stem.conv.weight.numel(),
                    n * ch * h * w * 48, s2d_b);
        wk.inplace_op("stem.iabn", ch, h, w, iabn_params(ch), n * ch * h * w,
                      wk.map_bytes(ch, h, w));
    } else {
        h = resolution / 2, w = resolution / 2;
        ch = m.stem.conv.out_channels();
        const int64_t in_b = wk.map_bytes(3, resolution, resolution);
        wk.alloc_op("stem.conv", ch, h, w, m.stem.conv.weight.numel(),
                    n * ch * h * w * 3 * 49, in_b);
        wk.inplace_op("stem.iabn", ch, h, w, iabn_params(ch), n * ch * h * w,
                      wk.map_bytes(ch, h, w));
        const int64_t conv_b = wk.map_bytes(ch, h, w);
        h /= 2;
        w /= 2;
        wk.alloc_op("stem.maxpool", ch, h, w, 0, n * ch * h * w, conv_b);
    }

    for (size_t s = 0; s < m.stages.size(); ++s) {
        for (size_t i = 0; i < m.stages[s].size(); ++i) {
            const std::string prefix =
                "stage" + std::to_string(s + 1) + ".block" + std::to_string(i + 1) + ".";
            int64_t h_out, w_out;
            walk_block(wk, prefix, m.stages[s][i], ch, h, w, h_out, w_out);
            ch = m.stages[s][i].kind == BlockKind::kBasic
                     ? m.stages[s][i].conv1.out_channels()
                     : m.stages[s][i].conv3->out_channels();
            h = h_out;
            w = w_out;
        }
    }

    const int64_t feat_b = wk.map_bytes(ch, h, w);
    const int64_t gap_b = n * ch * wk.bpe;
    wk.emit("head.gap", {n, ch}, 0, n * ch * h * w, feat_b + gap_b, gap_b);
    const int64_t classes = m.fc_weight.dim(0);
    const int64_t fc_b = n * classes * wk.bpe;
    wk.emit("head.fc", {n, classes}, m.fc_weight.numel() + m.fc_bias.numel(),
            n * ch * classes, gap_b + fc_b, fc_b);
    return wk;
}

}  // namespace

CostReport cost_report(const Model& m, int64_t batch, int64_t resolution,
                       const CostAssumptions& assumptions) {
    CostWalker wk = walk_model(m, batch, resolution, assumptions);
    CostReport rep;
    rep.model_name = m.config.variant_name;
    rep.input_resolution = resolution;
    rep.batch = batch;
    rep.assumptions = assumptions;
    rep.rows = std::move(wk.rows);
    rep.totals.name = "total";
    for (const CostRow& r : rep.rows) {
        rep.totals.params += r.params;
        rep.totals.macs += r.macs;
        rep.totals.activation_bytes_training += r.activation_bytes_training;
        rep.totals.activation_bytes_inference += r.activation_bytes_inference;
    }
    return rep;
}

int64_t count_params(const Model& m) {
    int64_t total = 0;
    for (const NamedTensorView& t : named_tensors(m)) {
        if (t.learnable) total += t.tensor->numel();
    }
    return total;
}

int64_t count_macs(const Model& m, int64_t resolution) {
    return cost_report(m, 1, resolution).totals.macs;
}

int64_t estimate_activation_memory(const Model& m, int64_t batch, int64_t resolution,
                                   bool inplace_enabled, bool training,
                                   int64_t bytes_per_element) {
    CostAssumptions as;
    as.bytes_per_element = bytes_per_element;
    as.inplace_enabled = inplace_enabled;
    CostWalker wk = walk_model(m, batch, resolution, as);
    if (training) {
        int64_t total = 0;
        for (const CostRow& r : wk.rows) total += r.activation_bytes_training;
        return total;
    }
    int64_t peak = 0;
    for (const CostRow& r : wk.rows) {
        peak = std::max(peak, r.activation_bytes_inference);
    }
    return peak;
}

std::vector<CostReport> compare(const std::vector<const Model*>& models, int64_t resolution,
                                const CostAssumptions& assumptions) {
    std::vector<CostReport> out;
    out.reserve(models.size());
    for (const Model* m : models) out.push_back(cost_report(*m, 1, resolution, assumptions));
    return out;
}

namespace {

std::string human_count(int64_t v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    if (v >= 1000000000) {
        os << static_cast<double>(v) / 1e9 << "G";
    } else if (v >= 1000000) {
        os << static_cast<double>(v) / 1e6 << "M";
    } else {
        os << v;
    }
    return os.str();
}

nlohmann::json row_json(const CostRow& r) {
    return {{"name", r.name},
            {"output_shape", r.output_shape},
            {"params", r.params},
            {"macs", r.macs},
            {"act_bytes_train", r.activation_bytes_training},
            {"act_bytes_infer", r.activation_bytes_inference}};
}

nlohmann::json report_json(const CostReport& rep) {
    nlohmann::json j;
    j["model"] = rep.model_name;
    j["input_resolution"] = rep.input_resolution;
    j["batch"] = rep.batch;
    j["mac_convention"] = "1 MAC = 1 multiply-accumulate; elementwise/normalization ops count 1 per output element";
    j["assumptions"] = {{"bytes_per_element", rep.assumptions.bytes_per_element},
                        {"inplace_enabled", rep.assumptions.inplace_enabled}};
    j["rows"] = nlohmann::json::array();
    for (const CostRow& r : rep.rows) j["rows"].push_back(row_json(r));
    j["totals"] = {{"params", rep.totals.params},
                   {"macs", rep.totals.macs},
                   {"act_bytes_train", rep.totals.activation_bytes_training},
                   {"act_bytes_infer", rep.totals.activation_bytes_inference}};
    return j;
}

}  // namespace

std::string CostReport::to_text() const {
    std::ostringstream os;
    os << "model: " << model_name << "   resolution: " << input_resolution
       << "   batch: " << batch << "\n";
    os << "cost convention: 1 MAC = 1 multiply-accumulate (elementwise/normalization ops count "
          "1 per output element); activation bytes assume "
       << assumptions.bytes_per_element << " bytes/element, inplace "
       << (assumptions.inplace_enabled ? "enabled" : "disabled") << "\n";
    os << std::left << std::setw(34) << "layer" << std::setw(20) << "output" << std::right
       << std::setw(12) << "params" << std::setw(16) << "macs" << std::setw(16) << "act_train"
       << std::setw(16) << "act_infer" << "\n";
    auto line = [&os](const CostRow& r) {
        os << std::left << std::setw(34) << r.name << std::setw(20) << shape_str_of(r.output_shape)
           << std::right << std::setw(12) << r.params << std::setw(16) << r.macs << std::setw(16)
           << r.activation_bytes_training << std::setw(16) << r.activation_bytes_inference << "\n";
    };
    for (const CostRow& r : rows) line(r);
    line(totals);
    os << "params " << human_count(totals.params) << ", macs " << human_count(totals.macs) << "\n";
    return os.str();
}

std::string CostReport::to_json() const { return report_json(*this).dump(2); }

std::string compare_to_text(const std::vector<CostReport>& reports) {
    std::ostringstream os;
    if (reports.empty()) return "(no models)\n";
    os << "resolution: " << reports.front().input_resolution << "\n";
    os << std::left << std::setw(14) << "model" << std::right << std::setw(14) << "params"
       << std::setw(16) << "macs" << std::setw(18) << "act_train" << std::setw(18) << "act_infer"
       << "\n";
    for (const CostReport& r : reports) {
        os << std::left << std::setw(14) << r.model_name << std::right << std::setw(14)
           << r.totals.params << std::setw(16) << r.totals.macs << std::setw(18)
           << r.totals.activation_bytes_training << std::setw(18)
           << r.totals.activation_bytes_inference << "\n";
    }
    return os.str();
}

std::string compare_to_json(const std::vector<CostReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const CostReport& r : reports) {
        j.push_back({{"model", r.model_name},
                     {"params", r.totals.params},
                     {"macs", r.totals.macs},
                     {"act_bytes_train", r.totals.activation_bytes_training},
                     {"act_bytes_infer", r.totals.activation_bytes_inference}});
    }
    return j.dump(2);
}

}  // namespace tresnet
