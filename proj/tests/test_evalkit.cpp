#include <doctest.h>

#include <cmath>
#include <vector>

#include "degforge/evalkit.hpp"
#include "degforge/toyworld.hpp"

using namespace degforge;
using namespace degforge::evalkit;

TEST_CASE("psnr identities and closed forms") {
    auto s = toyworld::make_scene(1, 16, 16);
    CHECK(psnr(s.pixels, s.pixels) == 100.0);

    // Uniform offset d gives MSE d^2; d = 0.1 -> 20 dB.
    Image shifted = s.pixels;
    Image base(16, 16, 0.4f);
    Image off(16, 16, 0.5f);
    CHECK(psnr(base, off) == doctest::Approx(20.0).epsilon(1e-4));

    // Naive recomputation on a random-ish pair.
    Image b = toyworld::make_scene(2, 16, 16).pixels;
    double mse = 0;
    for (size_t i = 0; i < s.pixels.px.size(); ++i) {
        double d = static_cast<double>(s.pixels.px[i]) - b.px[i];
        mse += d * d;
    }
    mse /= s.pixels.px.size();
    CHECK(psnr(s.pixels, b) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

    CHECK_THROWS(psnr(Image(16, 16), Image(16, 17)));
}

TEST_CASE("ssim identity, ordering, and an independent sliding-window oracle") {
    auto s = toyworld::make_scene(3, 16, 16);
    CHECK(ssim(s.pixels, s.pixels) == doctest::Approx(1.0).epsilon(1e-12));

    // Inverted checkerboard is structurally dissimilar.
    Image cb(16, 16), inv(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = ((x + y) % 2) ? 1.0f : 0.0f;
                cb.at(y, x, c) = v;
                inv.at(y, x, c) = 1.0f - v;
            }
    CHECK(ssim(cb, inv) < 0.5);

    // Mild noise scores between the two extremes.
    Image noisy = s.pixels;
    Rng rng(4);
    for (auto& v : noisy.px) v = clamp01(v + static_cast<float>(rng.normal() * 0.05));
    double mid = ssim(s.pixels, noisy);
    CHECK(mid < 1.0);
    CHECK(mid > ssim(cb, inv));

    // Full independent recomputation (11x11 Gaussian sigma 1.5, valid region).
    const int win = 11, half = win / 2;
    std::vector<double> k(win);
    double ksum = 0;
    for (int i = 0; i < win; ++i) {
        double d = i - half;
        k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
        ksum += k[i];
    }
    for (auto& v : k) v /= ksum;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Image& a = s.pixels;
    const Image& b = noisy;
    double total = 0;
    long count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = half; y < a.h - half; ++y)
            for (int x = half; x < a.w - half; ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        double w = k[i] * k[j];
                        ma += w * a.at(y + i - half, x + j - half, c);
                        mb += w * b.at(y + i - half, x + j - half, c);
                    }
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        double w = k[i] * k[j];
                        double da = a.at(y + i - half, x + j - half, c) - ma;
                        double db = b.at(y + i - half, x + j - half, c) - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    CHECK(mid == doctest::Approx(total / count).epsilon(1e-9));

    CHECK_THROWS(ssim(Image(8, 8), Image(8, 8)));  // smaller than the window
}

TEST_CASE("pixel_stat_features has dimension 8 and tracks simple stats") {
    Image flat(16, 16, 0.25f);
    auto f = pixel_stat_features(flat);
    REQUIRE(f.size() == 8);
    for (int c = 0; c < 3; ++c) {
        CHECK(f[2 * c] == doctest::Approx(0.25).epsilon(1e-6));      // mean
        CHECK(f[2 * c + 1] == doctest::Approx(0.0).epsilon(1e-6));   // std
    }
    CHECK(f[6] == doctest::Approx(0.0).epsilon(1e-6));  // no gradients
}

TEST_CASE("feature_set_of labels and stacks features") {
    std::vector<Image> imgs = {toyworld::make_scene(5, 16, 16).pixels,
                               toyworld::make_scene(6, 16, 16).pixels};
    auto fs = feature_set_of(imgs, "toy");
    CHECK(fs.source_label == "toy");
    CHECK(fs.n() == 2);
    CHECK(fs.dim() == 8);
    CHECK(fs.rows[0] == pixel_stat_features(imgs[0]));
}

TEST_CASE("frechet_distance identities and the 1-D Gaussian oracle") {
    Rng rng(7);
    FeatureSet a, b;
    for (int i = 0; i < 20000; ++i) {
        a.rows.push_back({rng.normal()});
        b.rows.push_back({rng.normal() + 3.0});
    }
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-9));
    // N(0,1) vs N(3,1): FD = |3|^2 + (1 + 1 - 2) = 9.
    CHECK(std::abs(frechet_distance(a, b) - 9.0) < 0.3);
    // Symmetry.
    CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-9));

    FeatureSet tiny;
    tiny.rows.push_back({1.0});
    CHECK_THROWS(frechet_distance(tiny, a));  // needs N >= 2 per side
}

TEST_CASE("wasserstein1d exact values") {
    CHECK(wasserstein1d({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
    // Point masses at 0 and at 1.
    CHECK(wasserstein1d({0, 0, 0}, {1, 1, 1}) == doctest::Approx(1.0));
    // Quantile matching: {0,1} vs {1,2} -> mean(|0-1|,|1-2|) = 1.
    CHECK(wasserstein1d({0, 1}, {1, 2}) == doctest::Approx(1.0));
    // Order-invariant.
    CHECK(wasserstein1d({3, 1, 2}, {2, 3, 1}) == doctest::Approx(0.0));
    CHECK_THROWS(wasserstein1d({}, {1.0}));
}

TEST_CASE("sliced feature wasserstein identity and shifted-Gaussian oracle") {
    Rng rng(8);
    FeatureSet a, b;
    for (int i = 0; i < 20000; ++i) {
        a.rows.push_back({rng.normal()});
        b.rows.push_back({rng.normal() + 1.0});
    }
    Rng w1(9), w2(9);
    CHECK(feature_wasserstein(a, a, 8, w1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(feature_wasserstein(a, b, 16, w2) - 1.0) < 0.05);
    // Deterministic given the projection seed.
    Rng w5(9), w6(9);
    CHECK(feature_wasserstein(a, b, 16, w5) == feature_wasserstein(a, b, 16, w6));
}

TEST_CASE("feature distances grow with degradation severity") {
    std::vector<Image> clean, mild, heavy;
    for (int i = 0; i < 12; ++i) {
        auto s = toyworld::make_scene(100 + i, 24, 24);
        clean.push_back(s.pixels);
        mild.push_back(toyworld::apply_degradation(s, toyworld::DegradationKind::haze, 0.3,
                                                   100 + i));
        heavy.push_back(toyworld::apply_degradation(s, toyworld::DegradationKind::haze, 0.9,
                                                    100 + i));
    }
    auto fc = feature_set_of(clean, "clean");
    auto fm = feature_set_of(mild, "mild");
    auto fh = feature_set_of(heavy, "heavy");
    CHECK(frechet_distance(fc, fm) < frechet_distance(fc, fh));
    Rng r1(11), r2(11);
    CHECK(feature_wasserstein(fc, fm, 16, r1) < feature_wasserstein(fc, fh, 16, r2));
}

TEST_CASE("build_report sorts rows and computes identity metrics") {
    auto s1 = toyworld::make_scene(20, 16, 16).pixels;
    auto s2 = toyworld::make_scene(21, 16, 16).pixels;
    auto s3 = toyworld::make_scene(22, 16, 16).pixels;

    DatasetEval ident{"zeta", "within", {{s1, s1}, {s2, s2}, {s3, s3}}};
    DatasetEval ood{"alpha", "ood", {{s1, s2}, {s2, s3}}};
    DatasetEval within2{"alpha", "within", {{s1, s3}, {s2, s1}}};

    auto report = build_report({ood, ident, within2});
    REQUIRE(report.rows.size() == 3);
    // within before ood, then dataset lexical.
    CHECK(report.rows[0].split == "within");
    CHECK(report.rows[0].dataset == "alpha");
    CHECK(report.rows[1].dataset == "zeta");
    CHECK(report.rows[2].split == "ood");

    const auto& id_row = report.rows[1];
    CHECK(id_row.psnr == 100.0);
    CHECK(id_row.ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(id_row.fid == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("scorer failures surface as an error sentinel") {
    auto s1 = toyworld::make_scene(30, 16, 16).pixels;
    DatasetEval d{"set", "within", {{s1, s1}}};
    PairScorer fine = [](const Image&, const Image&) { return 0.25; };
    PairScorer broken = [](const Image&, const Image&) -> double {
        throw std::runtime_error("scorer backend offline");
    };
    auto report = build_report({d}, {{"fine", fine}, {"broken", broken}});
    REQUIRE(report.rows.size() == 1);
    REQUIRE(report.rows[0].extra.size() == 2);
    CHECK(report.rows[0].extra[0].first == "fine");
    CHECK(report.rows[0].extra[0].second != "error");
    CHECK(report.rows[0].extra[1].first == "broken");
    CHECK(report.rows[0].extra[1].second == "error");

    // The sentinel also lands in the CSV output.
    CHECK(report.to_csv().find("error") != std::string::npos);
}

TEST_CASE("csv and json outputs are deterministic and parse back") {
    auto s1 = toyworld::make_scene(40, 16, 16).pixels;
    DatasetEval d{"only", "within", {{s1, s1}}};
    auto r1 = build_report({d});
    auto r2 = build_report({d});
    CHECK(r1.to_csv() == r2.to_csv());
    CHECK(r1.to_json() == r2.to_json());
    CHECK(r1.to_csv().rfind("dataset,split,psnr,ssim,fid", 0) == 0);
}
