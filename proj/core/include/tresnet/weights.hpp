#pragma once

#include <string>

#include "tresnet/model.hpp"

namespace tresnet {

// Weight container layout:
//   8-byte magic "TRSNETW1"
//   8-byte little-endian manifest byte count
//   UTF-8 JSON manifest {format_version, variant_name, leaky_slope,
//       tensors: [{name, shape, offset, length}]}
//   raw little-endian float32 payload; offsets/lengths in bytes relative
//   to the payload start, tensors packed in manifest order, no padding.

inline constexpr char kWeightMagic[8] = {'T', 'R', 'S', 'N', 'E', 'T', 'W', '1'};
inline constexpr int kWeightFormatVersion = 1;

void save_weights(const Model& m, const std::string& path);

/// Rebuilds a model for config and fills every named tensor from the
/// container. Round trips are bitwise lossless. Throws WeightFormatError
/// on bad magic/manifest, WeightLoadError (listing up to the first 10
/// offenders) on name/shape mismatches.
Model load_weights(const ModelConfig& config, const std::string& path);

/// Reads just the manifest's variant_name (for variant auto-detection).
std::string read_variant_name(const std::string& path);

}  // namespace tresnet
