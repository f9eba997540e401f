#include "degforge/scm.hpp"

#include <cmath>
#include <stdexcept>

#include "degforge/checkpoint.hpp"
#include "degforge/latentcodec.hpp"

namespace degforge::scm {

using latentcodec::image_to_tensor;
using latentcodec::tensor_to_image;

GtRoute route_ground_truth(DegradationKind deg) {
    switch (deg) {
        case DegradationKind::haze:
        case DegradationKind::motion_blur:
        case DegradationKind::raindrop:
            return {deg, GtMode::scm_corrected};
        case DegradationKind::rain:
        case DegradationKind::snow:
        case DegradationKind::low_light:
            return {deg, GtMode::vae_round_trip};
    }
    throw std::logic_error("unknown DegradationKind");
}

double scm_loss_weight(int t, const diffusion::NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw std::invalid_argument("scm_loss_weight: t out of range");
    return std::sqrt(sched.alpha_bar(t - 1)) * std::sqrt(1.0 - sched.alpha_bar(t));
}

Scm::Scm(uint64_t init_seed) {
    Rng rng(Rng::mix(init_seed, 0x5c3));
    auto conv = [&](const std::string& n, int ic, int oc, double scale) {
        double std = scale * std::sqrt(2.0 / (ic * 9));
        store_.add(n + ".w", nn::Tensor::randn({oc, ic, 3, 3}, rng, std));
        store_.add(n + ".b", nn::Tensor({oc}));
    };
    conv("c0", 6, 32, 1.0);
    conv("c1", 32, 32, 1.0);
    conv("c2", 32, 32, 1.0);
    conv("c3", 32, 3, 0.0);  // zero init: S starts as the identity on x_gen
}

nn::Var Scm::forward(nn::Graph& g, nn::Var x_gen, nn::Var clean) const {
    auto cv = [&](const std::string& n, nn::Var x) {
        return g.conv2d(x, g.leaf(*store_.find(n + ".w")), g.leaf(*store_.find(n + ".b")), 1, 1);
    };
    nn::Var h = g.silu(cv("c0", g.concat_chan(x_gen, clean)));
    h = g.silu(cv("c1", h));
    h = g.silu(cv("c2", h));
    nn::Var residual = cv("c3", h);
    return g.clamp01_st(g.add(x_gen, residual));
}

Image Scm::apply(const Image& x_gen, const Image& clean) const {
    require_same_shape(x_gen, clean, "Scm::apply");
    nn::Graph g;
    nn::Tensor out =
        forward(g, g.input(image_to_tensor(x_gen)), g.input(image_to_tensor(clean)))->val;
    return tensor_to_image(out);
}

void Scm::save(const std::string& dir) const {
    const nn::ParamStore& cs = store_;
    checkpoint::save_section(dir, "scm", cs.all());
}

void Scm::load(const std::string& dir) { checkpoint::load_section(dir, "scm", store_); }

namespace {

// x_gen via the frozen generator's one-step reverse at timestep t.
nn::Tensor generated_image(diffusion::Generator& gen, const ScmPair& pair, int t,
                           const nn::Tensor& eps) {
    nn::Tensor z0 = gen.codec.encode(pair.degraded);
    nn::Tensor z_t = diffusion::forward_noise(z0, t, eps, gen.sched);
    nn::Tensor prompt = conditioning::fuse_eval(pair.stats, pair.text, gen.fusion);
    nn::Tensor img_lat = gen.codec.encode(pair.clean);
    nn::Tensor eps_hat = gen.predict_eps(z_t, t, img_lat, prompt);
    nn::Tensor z_gen = diffusion::one_step_reverse(z_t, eps_hat, t, gen.sched);
    return image_to_tensor(gen.codec.decode(z_gen));
}

}  // namespace

double scm_training_loss(Scm& scm, diffusion::Generator& frozen_gen, const ScmPair& pair,
                         int t, const nn::Tensor& eps) {
    double w = scm_loss_weight(t, frozen_gen.sched);
    nn::Tensor x_gen = generated_image(frozen_gen, pair, t, eps);
    nn::Graph g;
    nn::Var x_s = scm.forward(g, g.input(x_gen), g.input(image_to_tensor(pair.clean)));
    nn::Var loss = g.scale(g.mse_to(x_s, image_to_tensor(pair.degraded)), w);
    return loss->val[0];
}

std::vector<double> train_scm(Scm& scm, diffusion::Generator& frozen_gen,
                              const std::vector<ScmPair>& pairs, const ScmTrainConfig& cfg,
                              Rng& rng) {
    if (pairs.empty()) throw std::invalid_argument("train_scm: empty dataset");
    nn::AdamW opt(scm.params().all(), cfg.lr);
    std::vector<double> curve;
    curve.reserve(cfg.steps);

    // Latents and prompts are fixed while the generator is frozen; cache them.
    struct Cached {
        nn::Tensor z0, img_lat, prompt, clean_t, degraded_t;
    };
    std::vector<Cached> cache;
    cache.reserve(pairs.size());
    for (const auto& pair : pairs)
        cache.push_back({frozen_gen.codec.encode(pair.degraded),
                         frozen_gen.codec.encode(pair.clean),
                         conditioning::fuse_eval(pair.stats, pair.text, frozen_gen.fusion),
                         image_to_tensor(pair.clean), image_to_tensor(pair.degraded)});

    for (int step = 0; step < cfg.steps; ++step) {
        const Cached& item = cache[rng.uniform_int(cache.size())];
        int t = 1 + static_cast<int>(rng.uniform_int(frozen_gen.sched.T));
        nn::Tensor eps(item.z0.shape);
        for (auto& v : eps.v) v = rng.normal();

        double w = scm_loss_weight(t, frozen_gen.sched);
        nn::Tensor z_t = diffusion::forward_noise(item.z0, t, eps, frozen_gen.sched);
        nn::Tensor eps_hat = frozen_gen.predict_eps(z_t, t, item.img_lat, item.prompt);
        nn::Tensor z_gen = diffusion::one_step_reverse(z_t, eps_hat, t, frozen_gen.sched);
        nn::Tensor x_gen = image_to_tensor(frozen_gen.codec.decode(z_gen));

        nn::Graph g;
        nn::Var x_s = scm.forward(g, g.input(x_gen), g.input(item.clean_t));
        nn::Var loss = g.scale(g.mse_to(x_s, item.degraded_t), w);
        opt.zero_grad();
        g.backward(loss);
        g.flush_param_grads();
        opt.step();
        curve.push_back(loss->val[0]);
    }
    return curve;
}

}  // namespace degforge::scm
