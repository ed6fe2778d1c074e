#include "tresnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "tresnet/errors.hpp"

namespace tresnet {

namespace {

// PPM header tokens may be separated by whitespace and '#' comments.
std::string next_header_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

int64_t parse_positive(const std::string& tok, const char* what, const std::string& path) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
        throw ImageError(path + ": malformed PPM " + what + " '" + tok + "'");
    }
    const int64_t v = std::stoll(tok);
    if (v < 1) throw ImageError(path + ": PPM " + what + " must be >= 1");
    return v;
}

}  // namespace

ImageInput decode_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageError("cannot open image " + path);

    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '6') {
        throw ImageError(path + ": not a binary PPM (P6) file");
    }

    ImageInput img;
    img.width = parse_positive(next_header_token(in), "width", path);
    img.height = parse_positive(next_header_token(in), "height", path);
    const int64_t maxval = parse_positive(next_header_token(in), "maxval", path);
    if (maxval != 255) {
        throw ImageError(path + ": only 8-bit PPM (maxval 255) is supported, got maxval " +
                         std::to_string(maxval));
    }
    // exactly one whitespace byte separates the header from the pixel data
    const size_t count = static_cast<size_t>(img.width * img.height * 3);
    img.pixels.resize(count);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
    if (in.gcount() != static_cast<std::streamsize>(count)) {
        throw ImageError(path + ": truncated pixel data");
    }
    return img;
}

void write_ppm(const ImageInput& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageError("cannot open " + path + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw ImageError("failed writing " + path);
}

Tensor image_to_tensor(const ImageInput& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != static_cast<size_t>(img.width * img.height * 3)) {
        throw ImageError("image buffer inconsistent with dimensions");
    }
    Tensor out({1, 3, img.height, img.width});
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            const size_t src = static_cast<size_t>((y * img.width + x) * 3);
            for (int64_t c = 0; c < 3; ++c) {
                out.at(0, c, y, x) = static_cast<float>(img.pixels[src + static_cast<size_t>(c)]) / 255.0f;
            }
        }
    }
    return out;
}

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
    if (x.rank() != 4) {
        throw DimensionError("bilinear_resize expects rank-4 input, got " + x.shape_str());
    }
    if (out_h < 1 || out_w < 1) throw ValidationError("bilinear_resize output extents must be >= 1");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h == out_h && w == out_w) return x;

    Tensor out({n, c, out_h, out_w});
    const double scale_h = static_cast<double>(h) / static_cast<double>(out_h);
    const double scale_w = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t idx = 0; idx < n * c; ++idx) {
        const float* src = x.data() + idx * h * w;
        float* dst = out.data() + idx * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            // half-pixel centers
            const double sy = (static_cast<double>(oy) + 0.5) * scale_h - 0.5;
            const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sy)), 0, h - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
            const double fy = std::clamp(sy - static_cast<double>(y0), 0.0, 1.0);
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const double sx = (static_cast<double>(ox) + 0.5) * scale_w - 0.5;
                const int64_t x0 =
                    std::clamp<int64_t>(static_cast<int64_t>(std::floor(sx)), 0, w - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
                const double fx = std::clamp(sx - static_cast<double>(x0), 0.0, 1.0);
                const double top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                const double bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * out_w + ox] = static_cast<float>(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    return out;
}

Tensor preprocess_image(const ImageInput& img, int64_t resolution) {
    return bilinear_resize(image_to_tensor(img), resolution, resolution);
}

}  // namespace tresnet
