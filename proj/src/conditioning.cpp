#include "degforge/conditioning.hpp"

#include <cmath>
#include <stdexcept>

namespace degforge::conditioning {

using degstats::kEncodingLen;

std::string degradation_phrase(toyworld::DegradationKind kind) {
    using DK = toyworld::DegradationKind;
    switch (kind) {
        case DK::haze: return ", in hazy conditions.";
        case DK::rain: return ", in rainy conditions.";
        case DK::snow: return ", in snowy conditions.";
        case DK::motion_blur: return ", with motion blur.";
        case DK::low_light: return ", in low-light conditions.";
        case DK::raindrop: return ", seen through raindrops.";
    }
    throw std::logic_error("unknown DegradationKind");
}

TextEmbedding stub_text_embed(const std::string& caption, toyworld::DegradationKind kind) {
    TextEmbedding e;
    e.source_caption = caption + degradation_phrase(kind);
    Rng rng(hash_str(e.source_caption));
    e.matrix = nn::Tensor::randn({kTokens, kEmbedDim}, rng, 1.0);
    return e;
}

TextEmbedding null_text_embedding() {
    TextEmbedding e;
    e.source_caption = "";
    e.matrix = nn::Tensor({kTokens, kEmbedDim});
    return e;
}

StatsConditioning make_stats_conditioning(const degstats::BinEncoding& mu,
                                          const degstats::BinEncoding& sigma) {
    StatsConditioning s;
    s.matrix = nn::Tensor({kStatsRows, kEncodingLen});
    for (int j = 0; j < kEncodingLen; ++j) {
        s.matrix[j] = mu.vec[j];
        s.matrix[kEncodingLen + j] = sigma.vec[j];
    }
    return s;
}

StatsConditioning null_stats_conditioning() {
    StatsConditioning s;
    s.matrix = nn::Tensor({kStatsRows, kEncodingLen});
    s.matrix[degstats::kNullBin] = 1.0;
    s.matrix[kEncodingLen + degstats::kNullBin] = 1.0;
    return s;
}

void FusionParams::init(Rng& rng, double noise_std) {
    // The stats projection is an embedding lookup over one-hot rows. It is
    // initialized with sinusoidal codes of the bin index so neighbouring bins
    // start with neighbouring embeddings: the downstream network can then
    // treat the encoded statistic as a smooth scalar instead of having to
    // memorize 128 unrelated directions. Starting this near zero starves the
    // stats pathway of gradient signal and the denoiser learns to ignore it.
    {
        const int bins = degstats::kNullBin;  // value bins precede the null bin
        nn::Tensor ws({kEncodingLen, kTokens});
        for (int b = 0; b < bins; ++b)
            for (int k = 0; k < kTokens; ++k) {
                double freq = std::pow(100.0, -static_cast<double>(k / 2) * 2 / kTokens);
                double arg = static_cast<double>(b) * M_PI / 4.0 * freq;
                ws[static_cast<int64_t>(b) * kTokens + k] = (k % 2 == 0) ? std::sin(arg)
                                                                         : std::cos(arg);
            }
        // The null bin keeps a zero code so a dropped conditioning is neutral.
        w_stats = &store.add("fusion.w_stats", std::move(ws));
    }
    b_stats = &store.add("fusion.b_stats", nn::Tensor({kTokens}));
    nn::Tensor wo = nn::Tensor::randn({kEmbedDim + kStatsRows, kEmbedDim}, rng, 1.0);
    // Text rows: identity plus small noise. Stats rows: half scale, so the
    // stats contribution is visible to the denoiser from the first step.
    for (int r = 0; r < kEmbedDim + kStatsRows; ++r)
        for (int c = 0; c < kEmbedDim; ++c) {
            int64_t idx = static_cast<int64_t>(r) * kEmbedDim + c;
            wo[idx] *= (r < kEmbedDim) ? noise_std : 0.5;
            if (r == c) wo[idx] += 1.0;
        }
    w_out = &store.add("fusion.w_out", std::move(wo));
    b_out = &store.add("fusion.b_out", nn::Tensor({kEmbedDim}));
}

void FusionParams::check_finite() const {
    for (const auto* p : store.all())
        for (double v : p->value.v)
            if (!std::isfinite(v))
                throw std::invalid_argument("FusionParams: non-finite parameter in " + p->name);
}

nn::Var fuse(nn::Graph& g, const StatsConditioning& stats, const TextEmbedding& text,
             FusionParams& params) {
    if (!params.w_stats) throw std::logic_error("fuse: FusionParams not initialized");
    require_shape(stats.matrix, {kStatsRows, kEncodingLen}, "fuse stats");
    require_shape(text.matrix, {kTokens, kEmbedDim}, "fuse text");

    nn::Var s = g.input(stats.matrix);                                      // [2,129]
    nn::Var proj = g.linear(s, g.leaf(*params.w_stats), g.leaf(*params.b_stats));  // [2,77]
    nn::Var stats_cols = g.transpose2d(proj);                               // [77,2]
    nn::Var cat = g.concat_cols(g.input(text.matrix), stats_cols);          // [77,770]
    return g.linear(cat, g.leaf(*params.w_out), g.leaf(*params.b_out));     // [77,768]
}

nn::Tensor fuse_eval(const StatsConditioning& stats, const TextEmbedding& text,
                     FusionParams& params) {
    nn::Graph g;
    return fuse(g, stats, text, params)->val;
}

}  // namespace degforge::conditioning
