#pragma once

#include <string>
#include <vector>

#include "degforge/image.hpp"
#include "degforge/manifest.hpp"
#include "degforge/nn/graph.hpp"

namespace degforge::restoration {

struct RestorerConfig {
    std::vector<int> channels = {16, 32, 64};     // one entry per hierarchy level
    std::vector<int> encoder_depths = {1, 1, 1};  // attention blocks per level
    int window_size = 4;
    int decoder_kernel = 3;  // 3 or 1; 3x3 suppresses patch border artifacts
    int attn_dim = 16;
};

// Hierarchical windowed-attention encoder (one attention block per level,
// stride-2 patch embeds) plus a lightweight convolutional decoder that
// upsamples and fuses all encoder levels.
class Restorer {
public:
    Restorer(RestorerConfig cfg, uint64_t init_seed);

    const RestorerConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }

    int total_downsample() const { return 1 << static_cast<int>(cfg_.channels.size()); }

    // Input dims must divide by the total downsample factor; no implicit
    // padding, the caller is told what padding is required.
    Image restore(const Image& degraded) const;

    nn::Var forward(nn::Graph& g, nn::Var x) const;  // [3,h,w] -> [3,h,w], clamped

    int64_t param_count() const { return store_.total_numel(); }
    // Conv weight elements in the decoder (excludes biases); used by the
    // analytic 3x3-vs-1x1 parameter-count relation.
    int64_t decoder_conv_weight_count() const;

    void save(const std::string& ckpt_dir) const;
    void load(const std::string& ckpt_dir);

private:
    RestorerConfig cfg_;
    mutable nn::ParamStore store_;
};

struct TrainConfig {
    int epochs = 50;
    double lr = 2e-4;          // AdamW initial lr
    int warmup_epochs = 1;     // linear warmup, then cosine anneal
    int batch = 4;
    double weight_decay = 1e-4;
};

// Closed-form warmup+cosine schedule; step counts are in optimizer steps.
double lr_at(int step, int total_steps, int warmup_steps, double lr_max);

struct TrainStats {
    std::vector<double> epoch_loss;          // mean L1 per epoch
    std::string loss_curve_csv;              // epoch,step,lr,loss
};

// L1 training on kept=true manifest rows; deterministic given the rng.
TrainStats train_restorer(Restorer& model, const std::vector<manifest::ManifestRecord>& rows,
                          const TrainConfig& cfg, Rng& rng);

// Concatenate two manifests, tagging rows existing/generated; duplicate
// gen_paths across the inputs are rejected.
std::vector<manifest::ManifestRecord> mix_datasets(
    const std::vector<manifest::ManifestRecord>& existing,
    const std::vector<manifest::ManifestRecord>& generated);

}  // namespace degforge::restoration
