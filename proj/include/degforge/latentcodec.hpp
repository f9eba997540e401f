#pragma once

#include <string>
#include <vector>

#include "degforge/image.hpp"
#include "degforge/nn/graph.hpp"
#include "degforge/toyworld.hpp"

namespace degforge::latentcodec {

// Image <-> [3,h,w] tensor conversion.
nn::Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const nn::Tensor& t);  // clamps to [0,1]

enum class CodecMode { learned, identity };

struct CodecConfig {
    CodecMode mode = CodecMode::learned;
    int downsample = 4;       // f; identity mode uses f=1
    int latent_channels = 4;  // c; identity mode uses c=3
};

// Small strided convolutional VAE (f=4, c=4). Encoding is deterministic at
// inference (posterior mean). Identity mode bypasses the network entirely so
// diffusion-core tests can be isolated from codec error.
class Codec {
public:
    explicit Codec(CodecConfig cfg, uint64_t init_seed = 1);

    static Codec identity();

    const CodecConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }

    // Deterministic latent (posterior mean); dims must divide by f.
    nn::Tensor encode(const Image& img) const;
    Image decode(const nn::Tensor& latent) const;
    Image round_trip_clean(const Image& clean) const;  // c_img_hat = D(E(c_img))

    std::vector<int> latent_shape(int h, int w) const;

    // Graph builders used by training loops. x is a [3,h,w] input var.
    nn::Var encode_mean_logvar(nn::Graph& g, nn::Var x) const;  // [2c, h/f, w/f]
    nn::Var decode_var(nn::Graph& g, nn::Var z) const;          // sigmoid output [3,h,w]

    void save(const std::string& ckpt_dir) const;
    void load(const std::string& ckpt_dir);

private:
    CodecConfig cfg_;
    mutable nn::ParamStore store_;
};

struct CodecTrainResult {
    std::vector<double> loss_curve;
    double heldout_mae = 0.0;
};

// Reconstruction MSE + small KL penalty on toyworld scenes.
CodecTrainResult train_codec(Codec& codec, const std::vector<Image>& train_images,
                             const std::vector<Image>& heldout_images, int steps, double lr,
                             Rng& rng);

}  // namespace degforge::latentcodec
