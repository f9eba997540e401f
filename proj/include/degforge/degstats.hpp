#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "degforge/image.hpp"
#include "degforge/rng.hpp"
#include "degforge/toyworld.hpp"

namespace degforge::degstats {

using toyworld::DegradationKind;

inline constexpr int kNumBins = 128;
inline constexpr int kEncodingLen = 129;  // 128 value bins + 1 null-conditioning bin
inline constexpr int kNullBin = 128;

struct DegradationStats {
    double mu = 0.0;     // mean of the degradation map, in [0,1]
    double sigma = 0.0;  // population std of the map, in [0, 0.5]
};

struct BinEncoding {
    std::vector<double> vec;  // length 129, exactly one entry is 1
    double range_lo = 0.0;
    double range_hi = 0.0;
    bool null_flag = false;

    int hot_index() const;
};

// c_map = |degraded - clean|, elementwise over all pixels and channels.
Image degradation_map(const Image& degraded, const Image& clean);

// mu/sigma computed jointly over all pixels and channels.
DegradationStats stats_of_map(const Image& map);

// (min, max); a degenerate single-value range is widened by 1e-6.
std::pair<double, double> compute_range(const std::vector<double>& values);

// Bin index for a value in [a,b]: clamp(floor(128*(v-a)/(b-a)), 0, 127).
int bin_index(double value, double lo, double hi);

BinEncoding encode_onehot(double value, std::pair<double, double> range, bool null_flag);

struct StatsHistogram {
    DegradationKind degradation = DegradationKind::haze;
    std::array<long, kNumBins> mu_counts{};
    // row i: histogram of sigma over pairs whose mu fell in bin i
    std::array<std::array<long, kNumBins>, kNumBins> sigma_counts_by_mu_bin{};
    std::pair<double, double> range_mu{0, 0};
    std::pair<double, double> range_sigma{0, 0};

    long total() const;
    void validate() const;  // row-sum invariant, nonnegative counts

    std::string to_json() const;
    static StatsHistogram from_json(const std::string& text);
};

// Build one histogram from per-pair (mu, sigma) stats; ranges are pooled
// over the given values first.
StatsHistogram build_histogram(DegradationKind deg,
                               const std::vector<DegradationStats>& pair_stats);

struct MuSigmaSample {
    double mu_gen = 0.0;
    double sigma_gen = 0.0;
    bool random_sigma = false;  // drawn from the 1-in-20 uniform branch
};

// mu_gen from the categorical over mu bins (uniform within the bin); sigma_gen
// from the conditional histogram of the chosen mu bin, except with probability
// random_sigma_rate it is uniform over the observed sigma support.
MuSigmaSample sample_mu_sigma(const StatsHistogram& hist, Rng& rng,
                              double random_sigma_rate = 1.0 / 20.0);

}  // namespace degforge::degstats
