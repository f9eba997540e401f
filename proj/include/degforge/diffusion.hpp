#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "degforge/conditioning.hpp"
#include "degforge/degstats.hpp"
#include "degforge/latentcodec.hpp"
#include "degforge/nn/graph.hpp"

namespace degforge::diffusion {

enum class ScheduleKind { linear, cosine };

// beta_t / alpha_t / alpha_bar_t sequences; alpha_bars[0] == 1 by definition.
struct NoiseSchedule {
    int T = 0;
    ScheduleKind kind = ScheduleKind::linear;
    std::vector<double> betas;       // betas[t-1] is beta_t, t in [1,T]
    std::vector<double> alphas;      // 1 - beta
    std::vector<double> alpha_bars;  // length T+1, index by t

    double beta(int t) const { return betas.at(t - 1); }
    double alpha_bar(int t) const { return alpha_bars.at(t); }
};

NoiseSchedule make_schedule(int T, ScheduleKind kind);

// z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps; t in [0, T] (t=0 returns z0).
nn::Tensor forward_noise(const nn::Tensor& z0, int t, const nn::Tensor& eps,
                         const NoiseSchedule& sched);

// z_gen = (z_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t)
nn::Tensor one_step_reverse(const nn::Tensor& z_t, const nn::Tensor& eps_hat, int t,
                            const NoiseSchedule& sched);

struct GuidanceConfig {
    double s_img = 1.5;
    double s_text = 7.5;
    int steps = 20;
};

struct DenoiserConfig {
    int latent_channels = 4;
    int base_channels = 32;   // level widths: base, base*3/2, base*2
    int ctx_dim = 32;         // compact prompt context
    int attn_dim = 32;
    int temb_dim = 32;
};

// 3-level U-shaped conv noise predictor with sinusoidal timestep embedding
// and per-level cross-attention over the fused 77x768 prompt. Image
// conditioning enters by channel-concatenating E(c_img) to z_t.
class Denoiser {
public:
    Denoiser(DenoiserConfig cfg, uint64_t init_seed);

    const DenoiserConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }

    // z_t: [c,h,w] var; img_latent: [c,h,w] var; prompt: [77,768] var.
    nn::Var forward(nn::Graph& g, nn::Var z_t, int t, nn::Var img_latent, nn::Var prompt) const;

private:
    DenoiserConfig cfg_;
    mutable nn::ParamStore store_;
    std::vector<int> widths_;
};

nn::Tensor timestep_embedding(int t, int dim);

// The full degradation generator: codec + fusion + denoiser + schedule.
struct Generator {
    latentcodec::Codec codec;
    conditioning::FusionParams fusion;
    Denoiser denoiser;
    NoiseSchedule sched;
    std::string checkpoint_id = "untrained";

    Generator(latentcodec::Codec codec_, DenoiserConfig dcfg, int T, ScheduleKind kind,
              uint64_t init_seed);

    nn::Tensor null_image_latent(int h, int w) const;
    nn::Tensor null_prompt();  // fuse(null stats, zero text)

    // Forward-only noise prediction.
    nn::Tensor predict_eps(const nn::Tensor& z_t, int t, const nn::Tensor& img_latent,
                           const nn::Tensor& prompt);

    // Dual classifier-free guidance recombination:
    //   e = e(z,0,0) + s_img*(e(z,cI,0) - e(z,0,0)) + s_text*(e(z,cI,cP) - e(z,cI,0))
    nn::Tensor guided_eps(const nn::Tensor& z_t, int t, const nn::Tensor& img_latent,
                          const nn::Tensor& prompt, const GuidanceConfig& cfg);

    // Ancestral DDPM sampling over cfg.steps uniformly strided timesteps,
    // decoded through the codec. Deterministic given the rng state.
    Image sample(const Image& clean, toyworld::DegradationKind kind, double mu_gen,
                 double sigma_gen, const std::string& caption,
                 std::pair<double, double> range_mu, std::pair<double, double> range_sigma,
                 const GuidanceConfig& cfg, Rng& rng);

    std::vector<nn::Param*> trainable_params();
    void save(const std::string& dir) const;
    void load(const std::string& dir);
};

// Precomputed training example (latents cached once per pair).
struct TrainExample {
    nn::Tensor latent_in;    // E(x_in)
    nn::Tensor latent_cond;  // E(c_img)
    conditioning::StatsConditioning stats;
    conditioning::TextEmbedding text;
};

TrainExample make_train_example(Generator& gen, const Image& degraded, const Image& clean,
                                toyworld::DegradationKind kind, const std::string& caption,
                                std::pair<double, double> range_mu,
                                std::pair<double, double> range_sigma);

struct GenTrainConfig {
    int steps = 2000;
    int batch = 4;  // gradient-accumulation batch
    double lr = 2e-3;
    double cond_dropout = 0.05;  // per modality
};

// Eq.-style eps-matching objective; returns the per-step loss curve.
std::vector<double> train_generator(Generator& gen, const std::vector<TrainExample>& examples,
                                    const GenTrainConfig& cfg, Rng& rng);

// Evaluation-only objective for a caller-supplied predictor (test oracle hook):
// samples t and eps, forms z_t from z0, returns mean((eps - predictor(z_t,t,eps))^2).
using PredictFn = std::function<nn::Tensor(const nn::Tensor& z_t, int t, const nn::Tensor& eps)>;
double evaluate_training_loss(const PredictFn& predictor, const nn::Tensor& z0,
                              const NoiseSchedule& sched, Rng& rng);

}  // namespace degforge::diffusion
