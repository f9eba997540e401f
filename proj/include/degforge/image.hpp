#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace degforge {

// RGB image, float pixels in [0,1], row-major (y, x, c).
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> px;  // size h*w*3

    Image() = default;
    Image(int height, int width, float fill = 0.0f)
        : h(height), w(width), px(static_cast<size_t>(height) * width * 3, fill) {}

    float& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }

    size_t size() const { return px.size(); }

    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

inline void require_same_shape(const Image& a, const Image& b, const std::string& what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(what + ": image shape mismatch (" +
                                    std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
                                    std::to_string(b.h) + "x" + std::to_string(b.w) + ")");
}

// Single-channel map with the same layout conventions.
struct Gray {
    int h = 0;
    int w = 0;
    std::vector<float> px;

    Gray() = default;
    Gray(int height, int width, float fill = 0.0f)
        : h(height), w(width), px(static_cast<size_t>(height) * width, fill) {}

    float& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
    float at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }
};

}  // namespace degforge
