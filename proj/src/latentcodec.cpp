#include "degforge/latentcodec.hpp"

#include <cmath>
#include <stdexcept>

#include "degforge/checkpoint.hpp"

namespace degforge::latentcodec {

nn::Tensor image_to_tensor(const Image& img) {
    nn::Tensor t({3, img.h, img.w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t[(static_cast<int64_t>(c) * img.h + y) * img.w + x] = img.at(y, x, c);
    return t;
}

Image tensor_to_image(const nn::Tensor& t) {
    if (t.shape.size() != 3 || t.shape[0] != 3)
        throw std::invalid_argument("tensor_to_image: want [3,h,w]");
    Image img(t.shape[1], t.shape[2]);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                img.at(y, x, c) =
                    clamp01(static_cast<float>(t[(static_cast<int64_t>(c) * img.h + y) * img.w + x]));
    return img;
}

namespace {

struct ConvP {
    nn::Param* w;
    nn::Param* b;
};

ConvP add_conv(nn::ParamStore& s, const std::string& name, int ic, int oc, int k, Rng& rng) {
    double std = std::sqrt(2.0 / (ic * k * k));
    ConvP p;
    p.w = &s.add(name + ".w", nn::Tensor::randn({oc, ic, k, k}, rng, std));
    p.b = &s.add(name + ".b", nn::Tensor({oc}));
    return p;
}

}  // namespace

Codec::Codec(CodecConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.mode == CodecMode::identity) {
        cfg_.downsample = 1;
        cfg_.latent_channels = 3;
        return;
    }
    if (cfg_.downsample != 4 || cfg_.latent_channels != 4)
        throw std::invalid_argument("Codec: learned mode supports f=4, c=4");
    Rng rng(Rng::mix(init_seed, 0xc0dec));
    add_conv(store_, "enc0", 3, 16, 3, rng);
    add_conv(store_, "enc1", 16, 32, 3, rng);
    add_conv(store_, "enc2", 32, 32, 3, rng);
    add_conv(store_, "enc3", 32, 2 * cfg_.latent_channels, 3, rng);
    add_conv(store_, "dec0", cfg_.latent_channels, 32, 3, rng);
    add_conv(store_, "dec1", 32, 32, 3, rng);
    add_conv(store_, "dec2", 32, 16, 3, rng);
    add_conv(store_, "dec3", 16, 3, 3, rng);
}

Codec Codec::identity() { return Codec(CodecConfig{CodecMode::identity, 1, 3}); }

std::vector<int> Codec::latent_shape(int h, int w) const {
    return {cfg_.latent_channels, h / cfg_.downsample, w / cfg_.downsample};
}

nn::Var Codec::encode_mean_logvar(nn::Graph& g, nn::Var x) const {
    auto cv = [&](const char* name, nn::Var in, int stride) {
        nn::Param* w = store_.find(std::string(name) + ".w");
        nn::Param* b = store_.find(std::string(name) + ".b");
        return g.conv2d(in, g.leaf(*w), g.leaf(*b), stride, 1);
    };
    nn::Var h = g.silu(cv("enc0", x, 1));
    h = g.silu(cv("enc1", h, 2));
    h = g.silu(cv("enc2", h, 2));
    return cv("enc3", h, 1);  // [2c, h/4, w/4]
}

nn::Var Codec::decode_var(nn::Graph& g, nn::Var z) const {
    auto cv = [&](const char* name, nn::Var in) {
        nn::Param* w = store_.find(std::string(name) + ".w");
        nn::Param* b = store_.find(std::string(name) + ".b");
        return g.conv2d(in, g.leaf(*w), g.leaf(*b), 1, 1);
    };
    nn::Var h = g.silu(cv("dec0", z));
    h = g.silu(cv("dec1", g.upsample2x(h)));
    h = g.silu(cv("dec2", g.upsample2x(h)));
    return g.sigmoid(cv("dec3", h));
}

nn::Tensor Codec::encode(const Image& img) const {
    if (img.h % cfg_.downsample != 0 || img.w % cfg_.downsample != 0)
        throw std::invalid_argument("Codec::encode: dims must be divisible by " +
                                    std::to_string(cfg_.downsample));
    nn::Tensor x = image_to_tensor(img);
    if (cfg_.mode == CodecMode::identity) return x;
    nn::Graph g;
    nn::Tensor ml = encode_mean_logvar(g, g.input(std::move(x)))->val;
    // posterior mean only
    int c = cfg_.latent_channels;
    nn::Tensor mean({c, ml.shape[1], ml.shape[2]});
    std::copy(ml.v.begin(), ml.v.begin() + mean.numel(), mean.v.begin());
    return mean;
}

Image Codec::decode(const nn::Tensor& latent) const {
    if (latent.shape.size() != 3 || latent.shape[0] != cfg_.latent_channels)
        throw std::invalid_argument("Codec::decode: latent shape mismatch");
    if (cfg_.mode == CodecMode::identity) return tensor_to_image(latent);
    nn::Graph g;
    nn::Tensor out = decode_var(g, g.input(latent))->val;
    return tensor_to_image(out);
}

Image Codec::round_trip_clean(const Image& clean) const { return decode(encode(clean)); }

void Codec::save(const std::string& dir) const {
    if (cfg_.mode == CodecMode::identity) return;
    const nn::ParamStore& cs = store_;
    checkpoint::save_section(dir, "codec", cs.all());
}

void Codec::load(const std::string& dir) {
    if (cfg_.mode == CodecMode::identity) return;
    checkpoint::load_section(dir, "codec", store_);
}

CodecTrainResult train_codec(Codec& codec, const std::vector<Image>& train_images,
                             const std::vector<Image>& heldout_images, int steps, double lr,
                             Rng& rng) {
    if (codec.config().mode == CodecMode::identity)
        throw std::invalid_argument("train_codec: identity codec is not trainable");
    if (train_images.empty()) throw std::invalid_argument("train_codec: empty training set");

    nn::AdamW opt(codec.params().all(), lr);
    CodecTrainResult res;
    const int c = codec.config().latent_channels;
    const double kl_weight = 1e-4;

    for (int step = 0; step < steps; ++step) {
        const Image& img = train_images[rng.uniform_int(train_images.size())];
        nn::Graph g;
        nn::Tensor x = image_to_tensor(img);
        nn::Var ml = codec.encode_mean_logvar(g, g.input(x));
        int lh = ml->val.shape[1], lw = ml->val.shape[2];

        // split into mean / logvar via constant masks
        nn::Tensor mask_mean(ml->val.shape), mask_lv(ml->val.shape);
        int64_t half = static_cast<int64_t>(c) * lh * lw;
        for (int64_t i = 0; i < half; ++i) mask_mean[i] = 1.0;
        for (int64_t i = half; i < 2 * half; ++i) mask_lv[i] = 1.0;

        // z = mean + exp(0.5*logvar) * eps  (reparameterized sample)
        // Build with shifted views: cheaper to slice by reshape trick.
        nn::Var mean_full = g.mul(ml, g.constant(mask_mean));
        nn::Var lv_full = g.mul(ml, g.constant(mask_lv));

        nn::Tensor eps({c, lh, lw});
        for (auto& e : eps.v) e = rng.normal();
        nn::Tensor eps_full(ml->val.shape);
        for (int64_t i = 0; i < half; ++i) eps_full[half + i] = eps[i];

        // sigma_full = exp(0.5 * lv_full) - 1 on the mean half is avoided by masking:
        nn::Var sigma_full = g.mul(g.exp(g.scale(lv_full, 0.5)), g.constant(mask_lv));
        nn::Var noised = g.add(mean_full, g.mul(sigma_full, g.constant(eps_full)));
        // fold the logvar half down onto the mean half: z[i] = mean[i] + sigma[i]*eps[i]
        // noised has mean in first half, sigma*eps in second half.
        nn::Tensor fold_w({c, 2 * c, 1, 1});
        for (int i = 0; i < c; ++i) {
            fold_w[(static_cast<int64_t>(i) * 2 * c + i)] = 1.0;
            fold_w[(static_cast<int64_t>(i) * 2 * c + c + i)] = 1.0;
        }
        nn::Var z = g.conv2d(noised, g.constant(fold_w), g.constant(nn::Tensor({c})), 1, 0);

        nn::Var recon = codec.decode_var(g, z);
        nn::Var rec_loss = g.mse_to(recon, x);

        // KL(q || N(0,1)) summed then scaled; built from masked halves
        // kl = -0.5 * sum(1 + lv - mean^2 - exp(lv)) over the latent half
        nn::Var mean_sq = g.mul(mean_full, mean_full);
        nn::Var exp_lv = g.mul(g.exp(lv_full), g.constant(mask_lv));
        nn::Var kl_terms = g.sub(g.add(g.constant(mask_lv), lv_full), g.add(mean_sq, exp_lv));
        // mask_lv zeroes the mean half of the "1 +" term; mean half contributes
        // -mean^2 which belongs in the KL as well, so add it separately:
        nn::Var kl = g.scale(g.sum_all(kl_terms), -0.5);
        nn::Var loss = g.add(rec_loss, g.scale(kl, kl_weight / x.numel()));

        opt.zero_grad();
        g.backward(loss);
        g.flush_param_grads();
        opt.step();
        res.loss_curve.push_back(loss->val[0]);
    }

    if (!heldout_images.empty()) {
        double mae = 0;
        for (const auto& img : heldout_images) {
            Image rt = codec.round_trip_clean(img);
            double s = 0;
            for (size_t i = 0; i < img.size(); ++i) s += std::fabs(rt.px[i] - img.px[i]);
            mae += s / static_cast<double>(img.size());
        }
        res.heldout_mae = mae / static_cast<double>(heldout_images.size());
    }
    return res;
}

}  // namespace degforge::latentcodec
