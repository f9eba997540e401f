#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "degforge/image.hpp"
#include "degforge/rng.hpp"

namespace degforge::evalkit {

// 10*log10(1/MSE) for [0,1] images, capped when MSE == 0.
double psnr(const Image& a, const Image& b, double cap = 100.0);

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
// channels. Images must be at least window x window.
double ssim(const Image& a, const Image& b, int window = 11, double k1 = 0.01, double k2 = 0.03);

struct FeatureSet {
    std::vector<std::vector<double>> rows;  // N x D
    std::string source_label;

    size_t n() const { return rows.size(); }
    size_t dim() const { return rows.empty() ? 0 : rows[0].size(); }
};

// Pooled pixel statistics: per-channel mean/std plus mean gradient magnitude
// and luminance mean. The default pluggable feature extractor.
std::vector<double> pixel_stat_features(const Image& img);
FeatureSet feature_set_of(const std::vector<Image>& images, const std::string& label);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); needs N >= 2 per side.
double frechet_distance(const FeatureSet& f1, const FeatureSet& f2);

// Sliced Wasserstein-1: average 1-D optimal transport distance over seeded
// random unit projections.
double feature_wasserstein(const FeatureSet& f1, const FeatureSet& f2, int projections,
                           Rng& rng);

// Exact 1-D W1 between empirical distributions (quantile-matched).
double wasserstein1d(std::vector<double> a, std::vector<double> b);

// External scorer hook (e.g. a perceptual metric): returns a score for one
// pair or throws; failures mark the row with an error sentinel.
using PairScorer = std::function<double(const Image& a, const Image& b)>;

struct DatasetEval {
    std::string dataset;
    std::string split;  // "within" | "ood"
    std::vector<std::pair<Image, Image>> pairs;  // (output, reference)
};

struct ReportRow {
    std::string dataset;
    std::string split;
    double psnr = 0;
    double ssim = 0;
    double fid = 0;
    std::vector<std::pair<std::string, std::string>> extra;  // scorer name -> value or "error"
};

struct EvalReport {
    std::vector<ReportRow> rows;  // sorted: within before ood, then dataset lexical

    std::string to_csv() const;
    std::string to_json() const;
};

EvalReport build_report(const std::vector<DatasetEval>& datasets,
                        const std::vector<std::pair<std::string, PairScorer>>& scorers = {});

}  // namespace degforge::evalkit
