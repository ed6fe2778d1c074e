#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tresnet {

/// Dense row-major float32 array of rank 1-4. Rank-4 tensors are
/// interpreted as NCHW. Tensors are values: copying copies the buffer,
/// and only the explicitly named in-place ops mutate one.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor of the given extents.
    explicit Tensor(std::vector<int64_t> dims);

    /// Takes ownership of a flat row-major buffer. product(dims) must
    /// equal data.size().
    Tensor(std::vector<int64_t> dims, std::vector<float> data);

    static Tensor full(std::vector<int64_t> dims, float value);

    int rank() const { return static_cast<int>(dims_.size()); }
    int64_t dim(int axis) const { return dims_[static_cast<size_t>(axis)]; }
    const std::vector<int64_t>& dims() const { return dims_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
    std::string shape_str() const;

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return {data_.data(), data_.size()}; }
    std::span<const float> values() const { return {data_.data(), data_.size()}; }

    // Unchecked indexed access; arity must match rank.
    float& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
    float& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * dims_[1] + c)]; }
    float at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * dims_[1] + c)]; }
    float& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }
    float at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }

    /// Reinterprets the buffer under new extents with the same element count.
    Tensor reshaped(std::vector<int64_t> new_dims) const;

    /// True when every element is finite (no NaN/Inf).
    bool all_finite() const;

    bool bitwise_equal(const Tensor& other) const;

private:
    std::vector<int64_t> dims_;
    std::vector<float> data_;
};

int64_t numel_of(const std::vector<int64_t>& dims);
std::string shape_str_of(const std::vector<int64_t>& dims);

}  // namespace tresnet
