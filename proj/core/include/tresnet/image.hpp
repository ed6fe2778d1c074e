#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tresnet/tensor.hpp"

namespace tresnet {

/// 8-bit RGB image, row-major, interleaved.
struct ImageInput {
    int64_t width = 0;
    int64_t height = 0;
    std::vector<uint8_t> pixels;  // height*width*3
};

/// Binary PPM (P6, maxval 255). Header comments (#) are accepted.
ImageInput decode_ppm(const std::string& path);
void write_ppm(const ImageInput& img, const std::string& path);

/// (1,3,H,W) float tensor; pixel value v maps to v/255 exactly
/// (255 -> 1.0, 0 -> 0.0). No mean/std normalization.
Tensor image_to_tensor(const ImageInput& img);

/// Bilinear interpolation with half-pixel centers, edges clamped,
/// no antialiasing filter.
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);

/// decode -> [0,1] tensor -> resize to resolution x resolution.
Tensor preprocess_image(const ImageInput& img, int64_t resolution);

}  // namespace tresnet
