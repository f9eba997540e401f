#include "degforge/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "degforge/checkpoint.hpp"
#include "degforge/latentcodec.hpp"
#include "degforge/png_io.hpp"

namespace degforge::restoration {

using latentcodec::image_to_tensor;
using latentcodec::tensor_to_image;

Restorer::Restorer(RestorerConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    if (cfg_.decoder_kernel != 1 && cfg_.decoder_kernel != 3)
        throw std::invalid_argument("Restorer: decoder_kernel must be 1 or 3");
    if (cfg_.channels.empty() || cfg_.encoder_depths.size() != cfg_.channels.size())
        throw std::invalid_argument("Restorer: channels/encoder_depths length mismatch");
    Rng rng(Rng::mix(init_seed, 0x7e5));
    auto conv = [&](const std::string& n, int ic, int oc, int k, double scale) {
        double std = scale * std::sqrt(2.0 / (ic * k * k));
        store_.add(n + ".w", nn::Tensor::randn({oc, ic, k, k}, rng, std));
        store_.add(n + ".b", nn::Tensor({oc}));
    };
    auto mat = [&](const std::string& n, int rows, int cols) {
        store_.add(n, nn::Tensor::randn({rows, cols}, rng, std::sqrt(1.0 / rows)));
    };

    int levels = static_cast<int>(cfg_.channels.size());
    int in_c = 3;
    for (int l = 0; l < levels; ++l) {
        int c = cfg_.channels[l];
        conv("e" + std::to_string(l), in_c, c, 3, 1.0);
        for (int d = 0; d < cfg_.encoder_depths[l]; ++d) {
            std::string p = "l" + std::to_string(l) + ".b" + std::to_string(d) + ".";
            nn::Tensor gamma({c});
            gamma.fill(1.0);
            store_.add(p + "g", std::move(gamma));
            store_.add(p + "be", nn::Tensor({c}));
            mat(p + "q", c, cfg_.attn_dim);
            mat(p + "k", c, cfg_.attn_dim);
            mat(p + "v", c, cfg_.attn_dim);
            mat(p + "o", cfg_.attn_dim, c);
            store_.add(p + "ob", nn::Tensor({c}));
        }
        in_c = c;
    }
    int k = cfg_.decoder_kernel;
    for (int l = levels - 1; l >= 1; --l)
        conv("d" + std::to_string(l), cfg_.channels[l], cfg_.channels[l - 1], k, 1.0);
    conv("d0", cfg_.channels[0], cfg_.channels[0], k, 1.0);
    conv("out", cfg_.channels[0], 3, k, 0.0);  // zero init: restorer starts at identity
}

int64_t Restorer::decoder_conv_weight_count() const {
    int64_t n = 0;
    int levels = static_cast<int>(cfg_.channels.size());
    for (int l = levels - 1; l >= 0; --l)
        n += store_.find("d" + std::to_string(l) + ".w")->value.numel();
    n += store_.find("out.w")->value.numel();
    return n;
}

nn::Var Restorer::forward(nn::Graph& g, nn::Var x) const {
    auto cv = [&](const std::string& n, nn::Var in, int stride, int pad) {
        return g.conv2d(in, g.leaf(*store_.find(n + ".w")), g.leaf(*store_.find(n + ".b")),
                        stride, pad);
    };
    const int win = cfg_.window_size;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim));

    // Window attention block: layernorm, per-window self-attention, residual.
    auto attn_block = [&](const std::string& p, nn::Var f) {
        int c = f->val.shape[0], h = f->val.shape[1], w = f->val.shape[2];
        nn::Var normed = g.norm_cs(f, g.leaf(*store_.find(p + "g")), g.leaf(*store_.find(p + "be")));
        nn::Var wq = g.leaf(*store_.find(p + "q"));
        nn::Var wk = g.leaf(*store_.find(p + "k"));
        nn::Var wv = g.leaf(*store_.find(p + "v"));
        nn::Var wo = g.leaf(*store_.find(p + "o"));
        nn::Var ob = g.leaf(*store_.find(p + "ob"));
        std::vector<nn::Var> outs;
        for (int y0 = 0; y0 + win <= h; y0 += win)
            for (int x0 = 0; x0 + win <= w; x0 += win) {
                nn::Var tok = g.extract_window(normed, y0, x0, win);  // [win*win, c]
                nn::Var q = g.matmul(tok, wq);
                nn::Var k = g.matmul(tok, wk);
                nn::Var v = g.matmul(tok, wv);
                nn::Var scores = g.softmax_rows(g.scale(g.matmul(q, g.transpose2d(k)), attn_scale));
                outs.push_back(g.add_row(g.matmul(g.matmul(scores, v), wo), ob));
            }
        return g.add(f, g.assemble_windows(std::move(outs), c, h, w, win));
    };

    int levels = static_cast<int>(cfg_.channels.size());
    std::vector<nn::Var> feats;
    nn::Var f = x;
    for (int l = 0; l < levels; ++l) {
        f = g.silu(cv("e" + std::to_string(l), f, 2, 1));
        for (int d = 0; d < cfg_.encoder_depths[l]; ++d)
            f = attn_block("l" + std::to_string(l) + ".b" + std::to_string(d) + ".", f);
        feats.push_back(f);
    }

    int k = cfg_.decoder_kernel;
    int pad = k / 2;
    nn::Var u = feats.back();
    for (int l = levels - 1; l >= 1; --l)
        u = g.silu(g.add(cv("d" + std::to_string(l), g.upsample2x(u), 1, pad), feats[l - 1]));
    u = g.silu(cv("d0", g.upsample2x(u), 1, pad));
    return g.clamp01_st(g.add(x, cv("out", u, 1, pad)));
}

Image Restorer::restore(const Image& degraded) const {
    int f = total_downsample();
    if (degraded.h % f != 0 || degraded.w % f != 0) {
        std::ostringstream msg;
        msg << "Restorer::restore: input " << degraded.h << "x" << degraded.w
            << " not divisible by " << f << "; pad to " << ((degraded.h + f - 1) / f) * f << "x"
            << ((degraded.w + f - 1) / f) * f << " first";
        throw std::invalid_argument(msg.str());
    }
    nn::Graph g;
    return tensor_to_image(forward(g, g.input(image_to_tensor(degraded)))->val);
}

void Restorer::save(const std::string& ckpt_dir) const {
    const nn::ParamStore& cs = store_;
    checkpoint::save_section(ckpt_dir, "restorer", cs.all());
    nlohmann::ordered_json meta = checkpoint::load_meta(ckpt_dir);
    meta["restorer"] = {{"channels", cfg_.channels},
                        {"encoder_depths", cfg_.encoder_depths},
                        {"window_size", cfg_.window_size},
                        {"decoder_kernel", cfg_.decoder_kernel},
                        {"attn_dim", cfg_.attn_dim}};
    checkpoint::save_meta(ckpt_dir, meta);
}

void Restorer::load(const std::string& ckpt_dir) {
    checkpoint::load_section(ckpt_dir, "restorer", store_);
}

double lr_at(int step, int total_steps, int warmup_steps, double lr_max) {
    if (step < 0 || total_steps <= 0) throw std::invalid_argument("lr_at: bad step counts");
    if (warmup_steps > 0 && step < warmup_steps)
        return lr_max * static_cast<double>(step) / warmup_steps;
    if (total_steps <= warmup_steps) return lr_max;
    double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    progress = std::min(1.0, progress);
    return lr_max * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

TrainStats train_restorer(Restorer& model, const std::vector<manifest::ManifestRecord>& rows,
                          const TrainConfig& cfg, Rng& rng) {
    if (cfg.lr <= 0) throw std::invalid_argument("train_restorer: lr must be > 0");
    if (cfg.warmup_epochs > cfg.epochs)
        throw std::invalid_argument("train_restorer: warmup exceeds epochs");

    struct Pair {
        nn::Tensor degraded, clean;
    };
    std::vector<Pair> data;
    for (const auto& r : rows) {
        if (!r.kept) continue;
        data.push_back({image_to_tensor(read_png(r.gen_path)), image_to_tensor(read_png(r.clean_path))});
    }
    if (data.empty()) throw std::invalid_argument("train_restorer: no kept training rows");

    int steps_per_epoch =
        (static_cast<int>(data.size()) + cfg.batch - 1) / std::max(1, cfg.batch);
    int total_steps = cfg.epochs * steps_per_epoch;
    int warmup_steps = cfg.warmup_epochs * steps_per_epoch;

    nn::AdamW opt(model.params().all(), cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);

    TrainStats stats;
    std::ostringstream csv;
    csv << "epoch,step,lr,loss\n";

    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t{0});

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the portable rng keeps batch order deterministic.
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);

        double epoch_sum = 0.0;
        int epoch_samples = 0;
        for (size_t base = 0; base < order.size(); base += cfg.batch) {
            size_t take = std::min<size_t>(cfg.batch, order.size() - base);
            double lr = lr_at(step, total_steps, warmup_steps, cfg.lr);
            opt.set_lr(lr);
            opt.zero_grad();
            double batch_loss = 0.0;
            for (size_t j = 0; j < take; ++j) {
                const Pair& p = data[order[base + j]];
                nn::Graph g;
                nn::Var y = model.forward(g, g.input(p.degraded));
                nn::Var loss = g.scale(g.l1_to(y, p.clean), 1.0 / static_cast<double>(take));
                g.backward(loss);
                g.flush_param_grads();
                batch_loss += loss->val[0];
            }
            opt.step();
            csv << epoch << "," << step << "," << lr << "," << batch_loss << "\n";
            epoch_sum += batch_loss * static_cast<double>(take);
            epoch_samples += static_cast<int>(take);
            ++step;
        }
        stats.epoch_loss.push_back(epoch_sum / epoch_samples);
    }
    stats.loss_curve_csv = csv.str();
    return stats;
}

std::vector<manifest::ManifestRecord> mix_datasets(
    const std::vector<manifest::ManifestRecord>& existing,
    const std::vector<manifest::ManifestRecord>& generated) {
    std::set<std::string> seen;
    std::vector<std::string> dups;
    auto note = [&](const std::string& p) {
        if (!seen.insert(p).second) dups.push_back(p);
    };
    for (const auto& r : existing) note(r.gen_path);
    for (const auto& r : generated) note(r.gen_path);
    if (!dups.empty()) {
        std::ostringstream msg;
        msg << "mix_datasets: duplicate gen_path entries:";
        for (const auto& d : dups) msg << " " << d;
        throw std::invalid_argument(msg.str());
    }
    std::vector<manifest::ManifestRecord> out;
    out.reserve(existing.size() + generated.size());
    for (auto r : existing) {
        r.source = "existing";
        out.push_back(std::move(r));
    }
    for (auto r : generated) {
        r.source = "generated";
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace degforge::restoration
