#include "tresnet/weights.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "tresnet/errors.hpp"

namespace tresnet {

namespace {

void write_u64_le(std::ostream& out, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64_le(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void save_weights(const Model& m, const std::string& path) {
    const auto tensors = named_tensors(m);

    nlohmann::json manifest;
    manifest["format_version"] = kWeightFormatVersion;
    manifest["variant_name"] = m.config.variant_name;
    manifest["leaky_slope"] = m.config.leaky_slope;
    manifest["tensors"] = nlohmann::json::array();
    int64_t offset = 0;
    for (const NamedTensorView& t : tensors) {
        const int64_t bytes = t.tensor->numel() * static_cast<int64_t>(sizeof(float));
        manifest["tensors"].push_back({{"name", t.name},
                                       {"shape", t.tensor->dims()},
                                       {"offset", offset},
                                       {"length", bytes}});
        offset += bytes;
    }
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw WeightFormatError("cannot open " + path + " for writing");
    out.write(kWeightMagic, sizeof(kWeightMagic));
    write_u64_le(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const NamedTensorView& t : tensors) {
        out.write(reinterpret_cast<const char*>(t.tensor->data()),
                  static_cast<std::streamsize>(t.tensor->numel() * sizeof(float)));
    }
    if (!out) throw WeightFormatError("failed writing weight container " + path);
}

namespace {

nlohmann::json read_manifest(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kWeightMagic, 8) != 0) {
        throw WeightFormatError(path + " is not a weight container (bad magic)");
    }
    const uint64_t manifest_len = read_u64_le(in);
    if (!in) throw WeightFormatError(path + ": truncated manifest length");
    std::string text(manifest_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(manifest_len));
    if (!in) throw WeightFormatError(path + ": truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw WeightFormatError(path + ": manifest is not valid JSON: " + e.what());
    }
    if (manifest.value("format_version", -1) != kWeightFormatVersion) {
        throw WeightFormatError(path + ": unsupported format_version");
    }
    return manifest;
}

}  // namespace

std::string read_variant_name(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightFormatError("cannot open weight container " + path);
    return read_manifest(in, path).value("variant_name", "");
}

Model load_weights(const ModelConfig& config, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightFormatError("cannot open weight container " + path);
    nlohmann::json manifest = read_manifest(in, path);

    ModelConfig effective = config;
    effective.leaky_slope = manifest.value("leaky_slope", config.leaky_slope);
    Model m = build(effective, /*init_seed=*/0);

    auto slots = named_tensor_slots(m);
    std::vector<std::string> offenders;
    auto offend = [&offenders](const std::string& msg) {
        if (offenders.size() < 10) offenders.push_back(msg);
    };

    const auto& entries = manifest.at("tensors");
    if (!entries.is_array()) throw WeightFormatError(path + ": manifest tensors must be an array");
    if (entries.size() != slots.size()) {
        offend("manifest lists " + std::to_string(entries.size()) + " tensors, model has " +
               std::to_string(slots.size()));
    }

    const size_t n = std::min(entries.size(), slots.size());
    struct PendingRead {
        Tensor* dst;
        int64_t offset;
        int64_t length;
    };
    std::vector<PendingRead> reads;
    for (size_t i = 0; i < n; ++i) {
        const auto& e = entries[i];
        const std::string name = e.value("name", "");
        if (name != slots[i].name) {
            offend("tensor " + std::to_string(i) + ": manifest name '" + name +
                   "' does not match model name '" + slots[i].name + "'");
            continue;
        }
        std::vector<int64_t> shape;
        try {
            shape = e.at("shape").get<std::vector<int64_t>>();
        } catch (const nlohmann::json::exception&) {
            offend(name + ": manifest shape is malformed");
            continue;
        }
        if (shape != slots[i].tensor->dims()) {
            offend(name + ": manifest shape " + shape_str_of(shape) + " does not match model " +
                   slots[i].tensor->shape_str());
            continue;
        }
        const int64_t length = e.value("length", int64_t{-1});
        if (length != slots[i].tensor->numel() * static_cast<int64_t>(sizeof(float))) {
            offend(name + ": manifest length " + std::to_string(length) + " does not match shape");
            continue;
        }
        reads.push_back({slots[i].tensor, e.value("offset", int64_t{-1}), length});
    }
    if (!offenders.empty()) {
        std::string msg = path + ": manifest does not match model config:";
        for (const std::string& o : offenders) msg += "\n  - " + o;
        throw WeightLoadError(msg);
    }

    const std::streampos payload_start = in.tellg();
    for (const PendingRead& r : reads) {
        if (r.offset < 0) throw WeightFormatError(path + ": negative payload offset");
        in.seekg(payload_start + static_cast<std::streamoff>(r.offset));
        in.read(reinterpret_cast<char*>(r.dst->data()), static_cast<std::streamsize>(r.length));
        if (!in) throw WeightFormatError(path + ": truncated payload");
    }
    return m;
}

}  // namespace tresnet
