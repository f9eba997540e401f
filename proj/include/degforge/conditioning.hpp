#pragma once

#include <string>

#include "degforge/degstats.hpp"
#include "degforge/nn/graph.hpp"

namespace degforge::conditioning {

inline constexpr int kTokens = 77;
inline constexpr int kEmbedDim = 768;
inline constexpr int kStatsRows = 2;

// Deterministic stand-in for a CLIP text encoder: hash-seeded 77x768 matrix.
// The degradation phrase (", in hazy conditions." etc.) is appended to the
// caption before hashing, so kind changes the embedding.
struct TextEmbedding {
    nn::Tensor matrix;  // [77, 768]
    std::string source_caption;
};

std::string degradation_phrase(toyworld::DegradationKind kind);
TextEmbedding stub_text_embed(const std::string& caption, toyworld::DegradationKind kind);
// Empty-text embedding used for null conditioning: all-zero matrix.
TextEmbedding null_text_embedding();

// Row 0 = mu one-hot, row 1 = sigma one-hot.
struct StatsConditioning {
    nn::Tensor matrix;  // [2, 129]
};

StatsConditioning make_stats_conditioning(const degstats::BinEncoding& mu,
                                          const degstats::BinEncoding& sigma);
StatsConditioning null_stats_conditioning();

// Learnable projections: 129->77 applied per stats row, then 770->768 applied
// per token row after concatenating the transposed stats with the text matrix
// (text columns first, stats columns last).
struct FusionParams {
    nn::ParamStore store;
    nn::Param* w_stats = nullptr;  // [129, 77]
    nn::Param* b_stats = nullptr;  // [77]
    nn::Param* w_out = nullptr;    // [770, 768]
    nn::Param* b_out = nullptr;    // [768]

    // proj_out starts at identity-on-text plus small noise so training begins
    // near text-only conditioning.
    void init(Rng& rng, double noise_std = 1e-3);
    void check_finite() const;
};

// Graph-building fuse, used inside training.
nn::Var fuse(nn::Graph& g, const StatsConditioning& stats, const TextEmbedding& text,
             FusionParams& params);

// Forward-only convenience.
nn::Tensor fuse_eval(const StatsConditioning& stats, const TextEmbedding& text,
                     FusionParams& params);

}  // namespace degforge::conditioning
