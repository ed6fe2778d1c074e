#include "tresnet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "tresnet/errors.hpp"

namespace tresnet {

int64_t numel_of(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
}

std::string shape_str_of(const std::vector<int64_t>& dims) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ')';
    return os.str();
}

namespace {

void validate_dims(const std::vector<int64_t>& dims) {
    if (dims.empty() || dims.size() > 4) {
        throw DimensionError("tensor rank must be 1-4, got rank " +
                             std::to_string(dims.size()));
    }
    for (size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] < 1) {
            throw DimensionError("tensor axis " + std::to_string(i) +
                                 " must have extent >= 1, got " + std::to_string(dims[i]));
        }
    }
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> dims) : dims_(std::move(dims)) {
    validate_dims(dims_);
    data_.assign(static_cast<size_t>(numel_of(dims_)), 0.0f);
}

Tensor::Tensor(std::vector<int64_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims(dims_);
    if (numel_of(dims_) != static_cast<int64_t>(data_.size())) {
        throw DimensionError("buffer holds " + std::to_string(data_.size()) +
                             " elements but shape " + shape_str_of(dims_) + " needs " +
                             std::to_string(numel_of(dims_)));
    }
}

Tensor Tensor::full(std::vector<int64_t> dims, float value) {
    Tensor t(std::move(dims));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

std::string Tensor::shape_str() const { return shape_str_of(dims_); }

Tensor Tensor::reshaped(std::vector<int64_t> new_dims) const {
    if (numel_of(new_dims) != numel()) {
        throw DimensionError("cannot reshape " + shape_str() + " to " +
                             shape_str_of(new_dims) + ": element counts differ");
    }
    return Tensor(std::move(new_dims), data_);
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    return dims_ == other.dims_ &&
           std::memcmp(data_.data(), other.data_.data(),
                       data_.size() * sizeof(float)) == 0;
}

}  // namespace tresnet
