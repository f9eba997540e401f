#include "degforge/degstats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace degforge::degstats {

using json = nlohmann::ordered_json;

int BinEncoding::hot_index() const {
    for (int i = 0; i < static_cast<int>(vec.size()); ++i)
        if (vec[i] == 1.0) return i;
    throw std::logic_error("BinEncoding: no hot entry");
}

Image degradation_map(const Image& degraded, const Image& clean) {
    require_same_shape(degraded, clean, "degradation_map");
    Image map(degraded.h, degraded.w);
    for (size_t i = 0; i < map.size(); ++i)
        map.px[i] = std::fabs(degraded.px[i] - clean.px[i]);
    return map;
}

DegradationStats stats_of_map(const Image& map) {
    if (map.size() == 0) throw std::invalid_argument("stats_of_map: empty map");
    double sum = 0.0;
    for (float v : map.px) sum += v;
    const double mu = sum / static_cast<double>(map.size());
    double var = 0.0;
    for (float v : map.px) {
        double d = v - mu;
        var += d * d;
    }
    var /= static_cast<double>(map.size());
    return {mu, std::sqrt(var)};
}

std::pair<double, double> compute_range(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("compute_range: empty input");
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn, hi = *mx;
    if (lo == hi) hi = lo + 1e-6;
    return {lo, hi};
}

int bin_index(double value, double lo, double hi) {
    if (lo >= hi) throw std::invalid_argument("bin_index: invalid range");
    int idx = static_cast<int>(std::floor(kNumBins * (value - lo) / (hi - lo)));
    return std::clamp(idx, 0, kNumBins - 1);
}

BinEncoding encode_onehot(double value, std::pair<double, double> range, bool null_flag) {
    if (!null_flag && range.first >= range.second)
        throw std::invalid_argument("encode_onehot: range lo must be < hi");
    BinEncoding enc;
    enc.vec.assign(kEncodingLen, 0.0);
    enc.range_lo = range.first;
    enc.range_hi = range.second;
    enc.null_flag = null_flag;
    enc.vec[null_flag ? kNullBin : bin_index(value, range.first, range.second)] = 1.0;
    return enc;
}

long StatsHistogram::total() const {
    long t = 0;
    for (long c : mu_counts) t += c;
    return t;
}

void StatsHistogram::validate() const {
    for (int i = 0; i < kNumBins; ++i) {
        if (mu_counts[i] < 0) throw std::runtime_error("StatsHistogram: negative mu count");
        long row = 0;
        for (long c : sigma_counts_by_mu_bin[i]) {
            if (c < 0) throw std::runtime_error("StatsHistogram: negative sigma count");
            row += c;
        }
        if (row != mu_counts[i])
            throw std::runtime_error("StatsHistogram: sigma row sum != mu count at bin " +
                                     std::to_string(i));
    }
}

std::string StatsHistogram::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["degradation"] = toyworld::to_string(degradation);
    j["range_mu"] = {range_mu.first, range_mu.second};
    j["range_sigma"] = {range_sigma.first, range_sigma.second};
    j["mu_counts"] = mu_counts;
    j["sigma_counts_by_mu_bin"] = sigma_counts_by_mu_bin;
    return j.dump();
}

StatsHistogram StatsHistogram::from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("schema_version").get<int>() != 1)
        throw std::runtime_error("StatsHistogram: unsupported schema_version");
    StatsHistogram h;
    h.degradation = toyworld::degradation_from_string(j.at("degradation").get<std::string>());
    h.range_mu = {j.at("range_mu")[0].get<double>(), j.at("range_mu")[1].get<double>()};
    h.range_sigma = {j.at("range_sigma")[0].get<double>(), j.at("range_sigma")[1].get<double>()};
    auto mu = j.at("mu_counts");
    auto sig = j.at("sigma_counts_by_mu_bin");
    if (mu.size() != kNumBins || sig.size() != kNumBins)
        throw std::runtime_error("StatsHistogram: bad bin count");
    for (int i = 0; i < kNumBins; ++i) {
        h.mu_counts[i] = mu[i].get<long>();
        if (sig[i].size() != kNumBins) throw std::runtime_error("StatsHistogram: bad sigma row");
        for (int k = 0; k < kNumBins; ++k) h.sigma_counts_by_mu_bin[i][k] = sig[i][k].get<long>();
    }
    h.validate();
    return h;
}

StatsHistogram build_histogram(DegradationKind deg,
                               const std::vector<DegradationStats>& pair_stats) {
    if (pair_stats.empty()) throw std::invalid_argument("build_histogram: empty input");
    std::vector<double> mus, sigmas;
    mus.reserve(pair_stats.size());
    sigmas.reserve(pair_stats.size());
    for (const auto& s : pair_stats) {
        mus.push_back(s.mu);
        sigmas.push_back(s.sigma);
    }
    StatsHistogram h;
    h.degradation = deg;
    h.range_mu = compute_range(mus);
    h.range_sigma = compute_range(sigmas);
    for (const auto& s : pair_stats) {
        int mi = bin_index(s.mu, h.range_mu.first, h.range_mu.second);
        int si = bin_index(s.sigma, h.range_sigma.first, h.range_sigma.second);
        ++h.mu_counts[mi];
        ++h.sigma_counts_by_mu_bin[mi][si];
    }
    h.validate();
    return h;
}

namespace {

// Uniform value within bin i of [lo, hi].
double value_in_bin(int i, double lo, double hi, Rng& rng) {
    double bw = (hi - lo) / kNumBins;
    return lo + (i + rng.uniform()) * bw;
}

int draw_categorical(const long* counts, int n, long total, Rng& rng) {
    double u = rng.uniform() * static_cast<double>(total);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += static_cast<double>(counts[i]);
        if (u < acc) return i;
    }
    for (int i = n - 1; i >= 0; --i)
        if (counts[i] > 0) return i;
    throw std::logic_error("draw_categorical: empty distribution");
}

}  // namespace

MuSigmaSample sample_mu_sigma(const StatsHistogram& hist, Rng& rng, double random_sigma_rate) {
    long total = hist.total();
    if (total <= 0) throw std::invalid_argument("sample_mu_sigma: empty histogram");

    MuSigmaSample out;
    int mu_bin = draw_categorical(hist.mu_counts.data(), kNumBins, total, rng);
    out.mu_gen = value_in_bin(mu_bin, hist.range_mu.first, hist.range_mu.second, rng);

    // Observed sigma support at bin resolution, pooled over all mu bins.
    std::array<long, kNumBins> global_sigma{};
    int first_sig = -1, last_sig = -1;
    for (int i = 0; i < kNumBins; ++i)
        for (int k = 0; k < kNumBins; ++k)
            if (hist.sigma_counts_by_mu_bin[i][k] > 0) {
                global_sigma[k] += hist.sigma_counts_by_mu_bin[i][k];
                if (first_sig < 0 || k < first_sig) first_sig = k;
                if (k > last_sig) last_sig = k;
            }

    out.random_sigma = rng.uniform() < random_sigma_rate;
    const double slo = hist.range_sigma.first, shi = hist.range_sigma.second;
    const double bw = (shi - slo) / kNumBins;
    if (out.random_sigma) {
        // Uniform within the observed sigma support ("acceptable limits").
        out.sigma_gen = rng.uniform(slo + first_sig * bw, slo + (last_sig + 1) * bw);
    } else {
        const auto& row = hist.sigma_counts_by_mu_bin[mu_bin];
        long row_total = 0;
        for (long c : row) row_total += c;
        int sig_bin;
        if (row_total > 0) {
            sig_bin = draw_categorical(row.data(), kNumBins, row_total, rng);
        } else {
            // Empty conditional row (can happen on loaded histograms): fall
            // back to the global sigma histogram.
            sig_bin = draw_categorical(global_sigma.data(), kNumBins, total, rng);
        }
        out.sigma_gen = value_in_bin(sig_bin, slo, shi, rng);
    }
    return out;
}

}  // namespace degforge::degstats
