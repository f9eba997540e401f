#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "degforge/image.hpp"
#include "degforge/rng.hpp"

namespace degforge::toyworld {

enum class DegradationKind { haze, rain, snow, motion_blur, low_light, raindrop };

inline constexpr std::array<DegradationKind, 6> kAllDegradations = {
    DegradationKind::haze,      DegradationKind::rain,      DegradationKind::snow,
    DegradationKind::motion_blur, DegradationKind::low_light, DegradationKind::raindrop};

std::string to_string(DegradationKind k);
DegradationKind degradation_from_string(const std::string& s);

// Procedurally generated clean scene. Deterministic function of (seed, h, w).
struct CleanScene {
    Image pixels;
    Gray depth;  // in [0,1], monotone in vertical position
    uint64_t seed = 0;
};

// Gradient background plus seeded geometric primitives. h, w >= 16.
CleanScene make_scene(uint64_t seed, int height, int width);

// Apply one analytic degradation at the given severity in [0,1].
// Haze follows I = J*t + A*(1-t) with t = exp(-beta*depth), beta = 3*severity,
// airlight A = 0.8. severity=0 is the identity for haze/low_light/motion_blur.
Image apply_degradation(const CleanScene& scene, DegradationKind kind, double severity,
                        uint64_t seed);

}  // namespace degforge::toyworld
