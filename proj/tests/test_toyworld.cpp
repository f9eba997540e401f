#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "degforge/png_io.hpp"
#include "degforge/toyworld.hpp"

using namespace degforge;
using toyworld::DegradationKind;

namespace {

double max_abs_diff(const Image& a, const Image& b) {
    REQUIRE(a.same_shape(b));
    double m = 0;
    for (size_t i = 0; i < a.px.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.px[i]) - b.px[i]));
    return m;
}

double mean_px(const Image& a) {
    double s = 0;
    for (float v : a.px) s += v;
    return s / a.px.size();
}

}  // namespace

TEST_CASE("make_scene is deterministic in (seed, h, w)") {
    auto a = toyworld::make_scene(123, 48, 64);
    auto b = toyworld::make_scene(123, 48, 64);
    CHECK(a.pixels.px == b.pixels.px);
    CHECK(a.depth.px == b.depth.px);
}

TEST_CASE("make_scene differs across seeds") {
    auto a = toyworld::make_scene(0, 32, 32);
    auto b = toyworld::make_scene(1, 32, 32);
    CHECK(a.pixels.px != b.pixels.px);
}

TEST_CASE("make_scene stays in [0,1] and depth is monotone top to bottom") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        auto s = toyworld::make_scene(seed, 32, 32);
        for (float v : s.pixels.px) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        for (int x = 0; x < s.depth.w; ++x)
            for (int y = 1; y < s.depth.h; ++y) CHECK(s.depth.at(y, x) <= s.depth.at(y - 1, x) + 1e-6f);
    }
}

TEST_CASE("make_scene rejects dims below 16") {
    CHECK_THROWS_AS(toyworld::make_scene(1, 15, 32), std::invalid_argument);
    CHECK_THROWS_AS(toyworld::make_scene(1, 32, 15), std::invalid_argument);
}

TEST_CASE("severity zero is identity for haze, low_light and motion_blur") {
    auto s = toyworld::make_scene(7, 32, 32);
    for (auto k : {DegradationKind::haze, DegradationKind::low_light, DegradationKind::motion_blur}) {
        Image d = toyworld::apply_degradation(s, k, 0.0, 99);
        CHECK(max_abs_diff(d, s.pixels) == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("apply_degradation is deterministic and stays in range") {
    auto s = toyworld::make_scene(9, 32, 32);
    for (auto k : toyworld::kAllDegradations) {
        for (double sev : {0.1, 0.5, 0.9}) {
            Image a = toyworld::apply_degradation(s, k, sev, 17);
            Image b = toyworld::apply_degradation(s, k, sev, 17);
            CHECK(a.px == b.px);
            for (float v : a.px) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
}

TEST_CASE("haze strength grows monotonically with severity") {
    auto s = toyworld::make_scene(11, 32, 32);
    double prev = -1;
    for (int i = 0; i <= 10; ++i) {
        double sev = i / 10.0;
        Image d = toyworld::apply_degradation(s, DegradationKind::haze, sev, 3);
        double dist = 0;
        for (size_t j = 0; j < d.px.size(); ++j)
            dist += std::abs(static_cast<double>(d.px[j]) - s.pixels.px[j]);
        dist /= d.px.size();
        CHECK(dist >= prev - 1e-9);
        prev = dist;
    }
}

TEST_CASE("haze matches the analytic transmission model") {
    auto s = toyworld::make_scene(13, 32, 32);
    double sev = 0.6, beta = 3.0 * sev, A = 0.8;
    Image d = toyworld::apply_degradation(s, DegradationKind::haze, sev, 5);
    for (int y = 0; y < s.pixels.h; ++y)
        for (int x = 0; x < s.pixels.w; ++x) {
            double t = std::exp(-beta * s.depth.at(y, x));
            for (int c = 0; c < 3; ++c) {
                double expect = s.pixels.at(y, x, c) * t + A * (1.0 - t);
                CHECK(d.at(y, x, c) == doctest::Approx(expect).epsilon(1e-5));
            }
        }
}

TEST_CASE("low_light darkens the image") {
    auto s = toyworld::make_scene(15, 32, 32);
    Image d = toyworld::apply_degradation(s, DegradationKind::low_light, 0.8, 1);
    CHECK(mean_px(d) < mean_px(s.pixels));
}

TEST_CASE("degradation seed changes the stochastic kinds") {
    auto s = toyworld::make_scene(21, 32, 32);
    for (auto k : {DegradationKind::rain, DegradationKind::snow, DegradationKind::raindrop}) {
        Image a = toyworld::apply_degradation(s, k, 0.5, 1);
        Image b = toyworld::apply_degradation(s, k, 0.5, 2);
        CHECK(a.px != b.px);
    }
}

TEST_CASE("degradation names round-trip through strings") {
    for (auto k : toyworld::kAllDegradations)
        CHECK(toyworld::degradation_from_string(toyworld::to_string(k)) == k);
    CHECK_THROWS(toyworld::degradation_from_string("fog"));
}

TEST_CASE("png round trip error is bounded by quantization") {
    auto s = toyworld::make_scene(3, 32, 32);
    std::string path =
        (std::filesystem::temp_directory_path() / "degforge_png_rt.png").string();
    write_png(path, s.pixels);
    Image back = read_png(path);
    CHECK(max_abs_diff(back, s.pixels) <= 1.0 / 255.0 + 1e-6);
    std::filesystem::remove(path);
}
