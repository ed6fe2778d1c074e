#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tresnet/model.hpp"

namespace tresnet {

struct CostAssumptions {
    int64_t bytes_per_element = 2;  // mixed-precision element width
    bool inplace_enabled = true;
};

struct CostRow {
    std::string name;
    std::vector<int64_t> output_shape;
    int64_t params = 0;
    int64_t macs = 0;
    int64_t activation_bytes_training = 0;
    int64_t activation_bytes_inference = 0;  // live-set footprint during the op
};

/// Static per-layer cost table. MAC convention: one multiply-accumulate
/// counts as one unit (this reproduces the usual ResNet50 = 4.1G figure);
/// elementwise/normalization ops contribute one unit per output element.
struct CostReport {
    std::string model_name;
    int64_t input_resolution = 224;
    int64_t batch = 1;
    CostAssumptions assumptions;
    std::vector<CostRow> rows;
    CostRow totals;  // exact column sums of rows

    std::string to_text() const;
    std::string to_json() const;
};

CostReport cost_report(const Model& m, int64_t batch, int64_t resolution,
                       const CostAssumptions& assumptions = {});

/// Element count over learnable tensors only (blur filters and running
/// statistics excluded; IABN gamma/beta included).
int64_t count_params(const Model& m);

/// Total MACs of one forward pass at batch 1.
int64_t count_macs(const Model& m, int64_t resolution);

/// Training mode: bytes of every activation retained for backward
/// (in-place ops alias their input buffer and retain nothing extra when
/// inplace_enabled). Inference mode: peak live-set under sequential
/// single-stream execution; residual branches hold the shortcut buffer
/// until the sum.
int64_t estimate_activation_memory(const Model& m, int64_t batch,
                                   int64_t resolution, bool inplace_enabled,
                                   bool training,
                                   int64_t bytes_per_element = 2);

/// Side-by-side totals for several models at one resolution,
/// deterministic row order.
std::vector<CostReport> compare(const std::vector<const Model*>& models,
                                int64_t resolution,
                                const CostAssumptions& assumptions = {});

std::string compare_to_text(const std::vector<CostReport>& reports);
std::string compare_to_json(const std::vector<CostReport>& reports);

}  // namespace tresnet
