#include "degforge/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "degforge/checkpoint.hpp"

namespace degforge::diffusion {

NoiseSchedule make_schedule(int T, ScheduleKind kind) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.betas.resize(T);
    if (kind == ScheduleKind::linear) {
        // Scaled-linear: the reference endpoints are defined at T=1000; other
        // T scale them so abar_T stays near zero (else short schedules never
        // reach full noise and the loss weight curve loses its interior peak).
        const double scale = 1000.0 / T;
        const double b0 = std::min(0.999, 1e-4 * scale);
        const double b1 = std::min(0.999, 2e-2 * scale);
        for (int t = 0; t < T; ++t)
            s.betas[t] = T == 1 ? b0 : b0 + (b1 - b0) * t / (T - 1);
    } else {
        // cosine schedule via abar(t) = f(t)/f(0), f(t) = cos^2((t/T + s)/(1+s) * pi/2)
        const double off = 0.008;
        auto f = [&](double t) {
            double x = (t / T + off) / (1.0 + off) * M_PI / 2.0;
            double c = std::cos(x);
            return c * c;
        };
        double prev = 1.0;
        for (int t = 1; t <= T; ++t) {
            double ab = f(static_cast<double>(t)) / f(0.0);
            double beta = 1.0 - ab / prev;
            s.betas[t - 1] = std::clamp(beta, 1e-8, 0.999);
            prev = ab;
        }
    }
    s.alphas.resize(T);
    s.alpha_bars.resize(T + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        s.alphas[t - 1] = 1.0 - s.betas[t - 1];
        s.alpha_bars[t] = s.alpha_bars[t - 1] * s.alphas[t - 1];
    }
    return s;
}

nn::Tensor forward_noise(const nn::Tensor& z0, int t, const nn::Tensor& eps,
                         const NoiseSchedule& sched) {
    if (t < 0 || t > sched.T) throw std::invalid_argument("forward_noise: t out of range");
    if (!z0.same_shape(eps)) throw std::invalid_argument("forward_noise: eps shape mismatch");
    double ab = sched.alpha_bar(t);
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    nn::Tensor out(z0.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = sa * z0[i] + sb * eps[i];
    return out;
}

nn::Tensor one_step_reverse(const nn::Tensor& z_t, const nn::Tensor& eps_hat, int t,
                            const NoiseSchedule& sched) {
    if (t < 0 || t > sched.T) throw std::invalid_argument("one_step_reverse: t out of range");
    if (!z_t.same_shape(eps_hat))
        throw std::invalid_argument("one_step_reverse: eps shape mismatch");
    double ab = sched.alpha_bar(t);
    if (ab <= 0.0) throw std::invalid_argument("one_step_reverse: alpha_bar must be positive");
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    nn::Tensor out(z_t.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = (z_t[i] - sb * eps_hat[i]) / sa;
    return out;
}

nn::Tensor timestep_embedding(int t, int dim) {
    nn::Tensor e({dim});
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

namespace {

nn::Param& add_t(nn::ParamStore& s, const std::string& name, nn::Tensor t) {
    return s.add(name, std::move(t));
}

void add_conv(nn::ParamStore& s, const std::string& name, int ic, int oc, int k, Rng& rng,
              double scale = 1.0) {
    double std = scale * std::sqrt(2.0 / (ic * k * k));
    add_t(s, name + ".w", nn::Tensor::randn({oc, ic, k, k}, rng, std));
    add_t(s, name + ".b", nn::Tensor({oc}));
}

void add_lin(nn::ParamStore& s, const std::string& name, int din, int dout, Rng& rng,
             double scale = 1.0) {
    double std = scale * std::sqrt(1.0 / din);
    add_t(s, name + ".w", nn::Tensor::randn({din, dout}, rng, std));
    add_t(s, name + ".b", nn::Tensor({dout}));
}

void add_norm(nn::ParamStore& s, const std::string& name, int c) {
    nn::Tensor gamma({c});
    gamma.fill(1.0);
    add_t(s, name + ".g", std::move(gamma));
    add_t(s, name + ".b", nn::Tensor({c}));
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    widths_ = {cfg.base_channels, cfg.base_channels * 3 / 2, cfg.base_channels * 2};
    Rng rng(Rng::mix(init_seed, 0xdead0));
    int in_ch = cfg.latent_channels * 2;  // z_t concat E(c_img)

    add_lin(store_, "ctx", conditioning::kEmbedDim, cfg.ctx_dim, rng);

    add_conv(store_, "in", in_ch, widths_[0], 3, rng);
    for (int l = 0; l < 3; ++l) {
        std::string p = "l" + std::to_string(l);
        add_lin(store_, p + ".temb", cfg.temb_dim, widths_[l], rng);
        // Pooled-prompt channel bias: a global conditioning pathway that does
        // not depend on the attention maps, so prompt information reaches
        // every channel directly.
        add_lin(store_, p + ".pemb", cfg.ctx_dim, widths_[l], rng);
        add_norm(store_, p + ".n1", widths_[l]);
        add_conv(store_, p + ".c1", widths_[l], widths_[l], 3, rng);
        // cross-attention
        add_lin(store_, p + ".q", widths_[l], cfg.attn_dim, rng);
        add_lin(store_, p + ".k", cfg.ctx_dim, cfg.attn_dim, rng);
        add_lin(store_, p + ".v", cfg.ctx_dim, cfg.attn_dim, rng);
        add_lin(store_, p + ".o", cfg.attn_dim, widths_[l], rng, 0.2);
        if (l < 2) add_conv(store_, "down" + std::to_string(l), widths_[l], widths_[l + 1], 3, rng);
    }
    add_conv(store_, "up1", widths_[2], widths_[1], 3, rng);
    add_conv(store_, "fuse1", widths_[1] * 2, widths_[1], 3, rng);
    add_norm(store_, "un1", widths_[1]);
    add_conv(store_, "up0", widths_[1], widths_[0], 3, rng);
    add_conv(store_, "fuse0", widths_[0] * 2, widths_[0], 3, rng);
    add_norm(store_, "un0", widths_[0]);
    add_conv(store_, "out", widths_[0], cfg.latent_channels, 3, rng, 0.0);  // zero-init
}

nn::Var Denoiser::forward(nn::Graph& g, nn::Var z_t, int t, nn::Var img_latent,
                          nn::Var prompt) const {
    auto L = [&](const std::string& name) { return g.leaf(*store_.find(name)); };
    auto conv = [&](const std::string& n, nn::Var x, int stride) {
        return g.conv2d(x, L(n + ".w"), L(n + ".b"), stride, 1);
    };
    auto lin = [&](const std::string& n, nn::Var x) {
        return g.linear(x, L(n + ".w"), L(n + ".b"));
    };
    auto norm = [&](const std::string& n, nn::Var x) {
        return g.norm_cs(x, L(n + ".g"), L(n + ".b"));
    };

    // Compact prompt context shared by all attention levels.
    nn::Var ctx = lin("ctx", prompt);  // [77, ctx_dim]

    // Token-mean of the context for the per-level channel-bias pathway.
    nn::Tensor pool_w({1, conditioning::kTokens});
    pool_w.fill(1.0 / conditioning::kTokens);
    nn::Var pooled = g.matmul(g.input(pool_w), ctx);  // [1, ctx_dim]

    nn::Tensor temb_sin = timestep_embedding(t, cfg_.temb_dim);
    nn::Var temb = g.reshape(g.input(nn::Tensor({1, cfg_.temb_dim}, temb_sin.v)),
                             {1, cfg_.temb_dim});

    auto xattn = [&](const std::string& p, nn::Var x, int c, int h, int w) {
        nn::Var tokens = g.chw_to_tokens(x);             // [hw, c]
        nn::Var q = lin(p + ".q", tokens);               // [hw, d]
        nn::Var k = lin(p + ".k", ctx);                  // [77, d]
        nn::Var v = lin(p + ".v", ctx);                  // [77, d]
        nn::Var scores = g.scale(g.matmul(q, g.transpose2d(k)), 1.0 / std::sqrt(cfg_.attn_dim));
        nn::Var attn = g.matmul(g.softmax_rows(scores), v);  // [hw, d]
        nn::Var out = lin(p + ".o", attn);                   // [hw, c]
        return g.add(x, g.tokens_to_chw(out, c, h, w));
    };

    auto level = [&](int l, nn::Var x) {
        std::string p = "l" + std::to_string(l);
        nn::Var te = g.reshape(g.add(lin(p + ".temb", temb), lin(p + ".pemb", pooled)),
                               {widths_[l]});
        nn::Var h = g.add_channel_bias(x, te);
        h = g.silu(norm(p + ".n1", h));
        h = conv(p + ".c1", h, 1);
        h = g.add(x, h);  // residual
        return xattn(p, h, widths_[l], h->val.shape[1], h->val.shape[2]);
    };

    nn::Var x = conv("in", g.concat_chan(z_t, img_latent), 1);
    nn::Var h0 = level(0, x);
    nn::Var h1 = level(1, conv("down0", h0, 2));
    nn::Var h2 = level(2, conv("down1", h1, 2));

    nn::Var u1 = conv("up1", g.upsample2x(h2), 1);
    u1 = conv("fuse1", g.concat_chan(u1, h1), 1);
    u1 = g.silu(norm("un1", u1));
    nn::Var u0 = conv("up0", g.upsample2x(u1), 1);
    u0 = conv("fuse0", g.concat_chan(u0, h0), 1);
    u0 = g.silu(norm("un0", u0));
    return conv("out", u0, 1);
}

Generator::Generator(latentcodec::Codec codec_, DenoiserConfig dcfg, int T, ScheduleKind kind,
                     uint64_t init_seed)
    : codec(std::move(codec_)),
      denoiser([&] {
          DenoiserConfig d = dcfg;
          d.latent_channels = codec.config().latent_channels;
          return d;
      }(), init_seed),
      sched(make_schedule(T, kind)) {
    Rng rng(Rng::mix(init_seed, 0xf5e));
    fusion.init(rng);
}

nn::Tensor Generator::null_image_latent(int h, int w) const {
    auto s = codec.latent_shape(h, w);
    return nn::Tensor(s);
}

nn::Tensor Generator::null_prompt() {
    return conditioning::fuse_eval(conditioning::null_stats_conditioning(),
                                   conditioning::null_text_embedding(), fusion);
}

nn::Tensor Generator::predict_eps(const nn::Tensor& z_t, int t, const nn::Tensor& img_latent,
                                  const nn::Tensor& prompt) {
    nn::Graph g;
    return denoiser.forward(g, g.input(z_t), t, g.input(img_latent), g.input(prompt))->val;
}

nn::Tensor Generator::guided_eps(const nn::Tensor& z_t, int t, const nn::Tensor& img_latent,
                                 const nn::Tensor& prompt, const GuidanceConfig& cfg) {
    nn::Tensor zero_img(img_latent.shape);
    nn::Tensor nprompt = null_prompt();
    nn::Tensor e_uncond = predict_eps(z_t, t, zero_img, nprompt);
    nn::Tensor e_img = predict_eps(z_t, t, img_latent, nprompt);
    nn::Tensor e_full = predict_eps(z_t, t, img_latent, prompt);
    nn::Tensor out(z_t.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = e_uncond[i] + cfg.s_img * (e_img[i] - e_uncond[i]) +
                 cfg.s_text * (e_full[i] - e_img[i]);
    return out;
}

Image Generator::sample(const Image& clean, toyworld::DegradationKind kind, double mu_gen,
                        double sigma_gen, const std::string& caption,
                        std::pair<double, double> range_mu, std::pair<double, double> range_sigma,
                        const GuidanceConfig& cfg, Rng& rng) {
    if (cfg.steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
    nn::Tensor img_latent = codec.encode(clean);
    auto stats = conditioning::make_stats_conditioning(
        degstats::encode_onehot(mu_gen, range_mu, false),
        degstats::encode_onehot(sigma_gen, range_sigma, false));
    auto text = conditioning::stub_text_embed(caption, kind);
    nn::Tensor prompt = conditioning::fuse_eval(stats, text, fusion);

    // Uniformly strided timesteps T = ts[0] > ts[1] > ... > ts[steps-1] >= 1.
    std::vector<int> ts(cfg.steps);
    for (int i = 0; i < cfg.steps; ++i)
        ts[i] = std::max(1, static_cast<int>(std::lround(
                                sched.T * (1.0 - static_cast<double>(i) / cfg.steps))));

    nn::Tensor z(img_latent.shape);
    for (auto& v : z.v) v = rng.normal();

    for (int i = 0; i < cfg.steps; ++i) {
        int t = ts[i];
        int t_prev = (i + 1 < cfg.steps) ? ts[i + 1] : 0;
        nn::Tensor eps = guided_eps(z, t, img_latent, prompt, cfg);
        nn::Tensor z0 = one_step_reverse(z, eps, t, sched);
        if (t_prev == 0) {
            z = std::move(z0);
            break;
        }
        double ab_t = sched.alpha_bar(t), ab_p = sched.alpha_bar(t_prev);
        double var = (1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p);
        double sigma = std::sqrt(std::max(0.0, var));
        double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
        for (int64_t j = 0; j < z.numel(); ++j)
            z[j] = std::sqrt(ab_p) * z0[j] + dir * eps[j] + sigma * rng.normal();
    }
    return codec.decode(z);
}

std::vector<nn::Param*> Generator::trainable_params() {
    std::vector<nn::Param*> out = denoiser.params().all();
    for (auto* p : fusion.store.all()) out.push_back(p);
    return out;
}

void Generator::save(const std::string& dir) const {
    codec.save(dir);
    const nn::ParamStore& fs = fusion.store;
    checkpoint::save_section(dir, "fusion", fs.all());
    const nn::ParamStore& ds = const_cast<Denoiser&>(denoiser).params();
    checkpoint::save_section(dir, "denoiser", ds.all());
}

void Generator::load(const std::string& dir) {
    codec.load(dir);
    checkpoint::load_section(dir, "fusion", fusion.store);
    checkpoint::load_section(dir, "denoiser", denoiser.params());
}

TrainExample make_train_example(Generator& gen, const Image& degraded, const Image& clean,
                                toyworld::DegradationKind kind, const std::string& caption,
                                std::pair<double, double> range_mu,
                                std::pair<double, double> range_sigma) {
    TrainExample ex;
    ex.latent_in = gen.codec.encode(degraded);
    ex.latent_cond = gen.codec.encode(clean);
    auto stats = degstats::stats_of_map(degstats::degradation_map(degraded, clean));
    ex.stats = conditioning::make_stats_conditioning(
        degstats::encode_onehot(stats.mu, range_mu, false),
        degstats::encode_onehot(stats.sigma, range_sigma, false));
    ex.text = conditioning::stub_text_embed(caption, kind);
    return ex;
}

std::vector<double> train_generator(Generator& gen, const std::vector<TrainExample>& examples,
                                    const GenTrainConfig& cfg, Rng& rng) {
    if (examples.empty()) throw std::invalid_argument("train_generator: empty dataset");
    nn::AdamW opt(gen.trainable_params(), cfg.lr);
    std::vector<double> curve;
    curve.reserve(cfg.steps);

    auto null_stats = conditioning::null_stats_conditioning();
    auto null_text = conditioning::null_text_embedding();

    for (int step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        double loss_acc = 0;
        for (int bi = 0; bi < cfg.batch; ++bi) {
            const TrainExample& ex = examples[rng.uniform_int(examples.size())];
            int t = 1 + static_cast<int>(rng.uniform_int(gen.sched.T));
            nn::Tensor eps(ex.latent_in.shape);
            for (auto& v : eps.v) v = rng.normal();
            nn::Tensor z_t = forward_noise(ex.latent_in, t, eps, gen.sched);

            bool drop_prompt = rng.uniform() < cfg.cond_dropout;
            bool drop_img = rng.uniform() < cfg.cond_dropout;

            nn::Graph g;
            nn::Var prompt = conditioning::fuse(g, drop_prompt ? null_stats : ex.stats,
                                                drop_prompt ? null_text : ex.text, gen.fusion);
            nn::Tensor img_lat = drop_img ? nn::Tensor(ex.latent_cond.shape) : ex.latent_cond;
            nn::Var pred =
                gen.denoiser.forward(g, g.input(z_t), t, g.input(img_lat), prompt);
            nn::Var loss = g.scale(g.mse_to(pred, eps), 1.0 / cfg.batch);
            g.backward(loss);
            g.flush_param_grads();
            loss_acc += loss->val[0] * cfg.batch;
        }
        opt.step();
        curve.push_back(loss_acc / cfg.batch);
    }
    gen.checkpoint_id = "trained";
    return curve;
}

double evaluate_training_loss(const PredictFn& predictor, const nn::Tensor& z0,
                              const NoiseSchedule& sched, Rng& rng) {
    int t = 1 + static_cast<int>(rng.uniform_int(sched.T));
    nn::Tensor eps(z0.shape);
    for (auto& v : eps.v) v = rng.normal();
    nn::Tensor z_t = forward_noise(z0, t, eps, sched);
    nn::Tensor pred = predictor(z_t, t, eps);
    if (!pred.same_shape(eps))
        throw std::invalid_argument("evaluate_training_loss: predictor shape mismatch");
    double s = 0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        double d = eps[i] - pred[i];
        s += d * d;
    }
    return s / static_cast<double>(eps.numel());
}

}  // namespace degforge::diffusion
