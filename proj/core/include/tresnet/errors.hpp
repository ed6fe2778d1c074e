#pragma once

#include <stdexcept>
#include <string>

namespace tresnet {

/// Shape/rank/extent violations. Messages name the offending axis.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Reflect padding wider than the spatial extent allows.
class PaddingError : public std::runtime_error {
public:
    explicit PaddingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid layer parameters (e.g. negative running variance).
class ParameterError : public std::runtime_error {
public:
    explicit ParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid user-supplied configuration or inputs.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Weight container has the wrong magic or a malformed manifest.
class WeightFormatError : public std::runtime_error {
public:
    explicit WeightFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Manifest names/shapes do not match the model being loaded.
class WeightLoadError : public std::runtime_error {
public:
    explicit WeightLoadError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable or unsupported image input.
class ImageError : public std::runtime_error {
public:
    explicit ImageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tresnet
