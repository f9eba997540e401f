#pragma once

#include <string>
#include <vector>

#include "degforge/diffusion.hpp"
#include "degforge/image.hpp"
#include "degforge/nn/graph.hpp"

namespace degforge::scm {

using toyworld::DegradationKind;

enum class GtMode { scm_corrected, vae_round_trip };

struct GtRoute {
    DegradationKind degradation;
    GtMode mode;
};

// haze/motion_blur/raindrop -> SCM-corrected; rain/snow/low_light -> VAE
// round-trip of the clean image (SCM would blur the fine structure there).
GtRoute route_ground_truth(DegradationKind deg);

// w(t) = sqrt(abar_{t-1}) * sqrt(1 - abar_t), with abar_0 = 1.
double scm_loss_weight(int t, const diffusion::NoiseSchedule& sched);

// 4-layer conv residual net, 32 channels, zero-initialized final layer, on the
// 6-channel concatenation [x_gen, c_img].
class Scm {
public:
    explicit Scm(uint64_t init_seed = 1);

    nn::ParamStore& params() { return store_; }

    // x_S = clamp(x_gen + S([x_gen, clean]), 0, 1)
    Image apply(const Image& x_gen, const Image& clean) const;

    nn::Var forward(nn::Graph& g, nn::Var x_gen, nn::Var clean) const;  // clamped sum

    void save(const std::string& ckpt_dir) const;
    void load(const std::string& ckpt_dir);

private:
    mutable nn::ParamStore store_;
};

struct ScmPair {
    Image degraded;  // x_in
    Image clean;     // c_img
    conditioning::StatsConditioning stats;
    conditioning::TextEmbedding text;
};

struct ScmTrainConfig {
    int steps = 400;
    double lr = 1e-3;
};

// Eq.-4-style training: sample t, noise E(x_in), take the frozen generator's
// eps prediction, one-step reverse, decode, and fit S under the timestep
// weight. The generator is taken const; its parameters are never touched.
std::vector<double> train_scm(Scm& scm, diffusion::Generator& frozen_gen,
                              const std::vector<ScmPair>& pairs, const ScmTrainConfig& cfg,
                              Rng& rng);

// Single-pair loss value (no parameter update), exposed for tests.
double scm_training_loss(Scm& scm, diffusion::Generator& frozen_gen, const ScmPair& pair,
                         int t, const nn::Tensor& eps);

}  // namespace degforge::scm
