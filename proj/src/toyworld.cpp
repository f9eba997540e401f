#include "degforge/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace degforge::toyworld {

std::string to_string(DegradationKind k) {
    switch (k) {
        case DegradationKind::haze: return "haze";
        case DegradationKind::rain: return "rain";
        case DegradationKind::snow: return "snow";
        case DegradationKind::motion_blur: return "motion_blur";
        case DegradationKind::low_light: return "low_light";
        case DegradationKind::raindrop: return "raindrop";
    }
    throw std::logic_error("unknown DegradationKind");
}

DegradationKind degradation_from_string(const std::string& s) {
    for (DegradationKind k : kAllDegradations)
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown degradation: " + s);
}

CleanScene make_scene(uint64_t seed, int height, int width) {
    if (height < 16 || width < 16)
        throw std::invalid_argument("make_scene: dimensions must be >= 16");

    Rng rng(Rng::mix(seed, 0x5ce7e));
    CleanScene scene;
    scene.seed = seed;
    scene.pixels = Image(height, width);
    scene.depth = Gray(height, width);

    // Sky-to-ground gradient background.
    float top[3], bot[3];
    for (int c = 0; c < 3; ++c) {
        top[c] = static_cast<float>(rng.uniform(0.4, 0.9));
        bot[c] = static_cast<float>(rng.uniform(0.05, 0.5));
    }
    for (int y = 0; y < height; ++y) {
        float a = static_cast<float>(y) / (height - 1);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                scene.pixels.at(y, x, c) = clamp01(top[c] * (1 - a) + bot[c] * a);
    }

    // Geometric primitives: filled rectangles and discs.
    int nprim = 3 + static_cast<int>(rng.uniform_int(5));
    for (int i = 0; i < nprim; ++i) {
        float col[3];
        for (int c = 0; c < 3; ++c) col[c] = static_cast<float>(rng.uniform());
        bool disc = rng.uniform() < 0.5;
        int cx = static_cast<int>(rng.uniform_int(width));
        int cy = static_cast<int>(rng.uniform_int(height));
        int r = 2 + static_cast<int>(rng.uniform_int(std::max(2, std::min(width, height) / 4)));
        int y0 = std::max(0, cy - r), y1 = std::min(height - 1, cy + r);
        int x0 = std::max(0, cx - r), x1 = std::min(width - 1, cx + r);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (disc) {
                    int dx = x - cx, dy = y - cy;
                    if (dx * dx + dy * dy > r * r) continue;
                }
                for (int c = 0; c < 3; ++c) scene.pixels.at(y, x, c) = col[c];
            }
    }

    // Depth monotone in vertical position: far at the top, near at the bottom.
    for (int y = 0; y < height; ++y) {
        float d = 1.0f - static_cast<float>(y) / (height - 1);
        for (int x = 0; x < width; ++x) scene.depth.at(y, x) = d;
    }
    return scene;
}

namespace {

Image apply_haze(const CleanScene& s, double severity) {
    const double beta = 3.0 * severity;
    const double airlight = 0.8;
    Image out(s.pixels.h, s.pixels.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double t = std::exp(-beta * s.depth.at(y, x));
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) =
                    clamp01(static_cast<float>(s.pixels.at(y, x, c) * t + airlight * (1 - t)));
        }
    return out;
}

Image apply_rain(const CleanScene& s, double severity, Rng& rng) {
    Image out = s.pixels;
    int count = static_cast<int>(std::lround(severity * 0.02 * out.h * out.w));
    for (int i = 0; i < count; ++i) {
        int x = static_cast<int>(rng.uniform_int(out.w));
        int y = static_cast<int>(rng.uniform_int(out.h));
        int len = 3 + static_cast<int>(rng.uniform_int(5));
        float bright = static_cast<float>(0.5 + 0.4 * rng.uniform());
        for (int k = 0; k < len; ++k) {
            int yy = y + k, xx = x + k / 3;  // slight slant
            if (yy >= out.h || xx >= out.w) break;
            for (int c = 0; c < 3; ++c)
                out.at(yy, xx, c) = clamp01(out.at(yy, xx, c) + bright * 0.6f);
        }
    }
    return out;
}

Image apply_snow(const CleanScene& s, double severity, Rng& rng) {
    Image out = s.pixels;
    int count = static_cast<int>(std::lround(severity * 0.015 * out.h * out.w));
    for (int i = 0; i < count; ++i) {
        int x = static_cast<int>(rng.uniform_int(out.w));
        int y = static_cast<int>(rng.uniform_int(out.h));
        int r = 1 + static_cast<int>(rng.uniform_int(2));
        float bright = static_cast<float>(0.7 + 0.3 * rng.uniform());
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= out.h || xx < 0 || xx >= out.w) continue;
                float fall = std::exp(-static_cast<float>(dx * dx + dy * dy) / (r * r + 0.5f));
                for (int c = 0; c < 3; ++c)
                    out.at(yy, xx, c) = clamp01(out.at(yy, xx, c) + bright * fall);
            }
    }
    return out;
}

Image apply_motion_blur(const CleanScene& s, double severity) {
    int width = 1 + static_cast<int>(std::floor(8.0 * severity));
    if (width <= 1) return s.pixels;
    Image out(s.pixels.h, s.pixels.w);
    int half_l = (width - 1) / 2, half_r = width / 2;
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                int n = 0;
                for (int k = -half_l; k <= half_r; ++k) {
                    int xx = std::clamp(x + k, 0, out.w - 1);
                    acc += s.pixels.at(y, xx, c);
                    ++n;
                }
                out.at(y, x, c) = clamp01(static_cast<float>(acc / n));
            }
    return out;
}

Image apply_low_light(const CleanScene& s, double severity) {
    double gamma = 1.0 + 4.0 * severity;
    Image out(s.pixels.h, s.pixels.w);
    for (size_t i = 0; i < out.size(); ++i)
        out.px[i] = clamp01(static_cast<float>(std::pow(s.pixels.px[i], gamma)));
    return out;
}

Image apply_raindrop(const CleanScene& s, double severity, Rng& rng) {
    // Circular lens-blur blobs: inside each drop the image is replaced by a
    // box-blurred version blended toward the blur center.
    Image out = s.pixels;
    int count = static_cast<int>(std::lround(severity * 12));
    for (int i = 0; i < count; ++i) {
        int cx = static_cast<int>(rng.uniform_int(out.w));
        int cy = static_cast<int>(rng.uniform_int(out.h));
        int r = 2 + static_cast<int>(rng.uniform_int(std::max(2, out.w / 8)));
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                int yy = cy + dy, xx = cx + dx;
                if (yy < 0 || yy >= out.h || xx < 0 || xx >= out.w) continue;
                if (dx * dx + dy * dy > r * r) continue;
                for (int c = 0; c < 3; ++c) {
                    double acc = 0;
                    int n = 0;
                    for (int by = -2; by <= 2; ++by)
                        for (int bx = -2; bx <= 2; ++bx) {
                            int sy = std::clamp(yy + by, 0, out.h - 1);
                            int sx = std::clamp(xx + bx, 0, out.w - 1);
                            acc += s.pixels.at(sy, sx, c);
                            ++n;
                        }
                    out.at(yy, xx, c) = clamp01(static_cast<float>(acc / n * 0.9 + 0.1));
                }
            }
    }
    return out;
}

}  // namespace

Image apply_degradation(const CleanScene& scene, DegradationKind kind, double severity,
                        uint64_t seed) {
    if (severity < 0.0 || severity > 1.0)
        throw std::invalid_argument("apply_degradation: severity must be in [0,1]");
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(kind) + 1, 0xde6));
    switch (kind) {
        case DegradationKind::haze: return apply_haze(scene, severity);
        case DegradationKind::rain: return apply_rain(scene, severity, rng);
        case DegradationKind::snow: return apply_snow(scene, severity, rng);
        case DegradationKind::motion_blur: return apply_motion_blur(scene, severity);
        case DegradationKind::low_light: return apply_low_light(scene, severity);
        case DegradationKind::raindrop: return apply_raindrop(scene, severity, rng);
    }
    throw std::logic_error("unknown DegradationKind");
}

}  // namespace degforge::toyworld
