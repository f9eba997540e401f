#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "degforge/nn/tensor.hpp"

namespace degforge::nn {

// Learnable tensor with Adam state, owned by a ParamStore.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    void zero_grad() { grad.fill(0.0); }
};

class ParamStore {
public:
    Param& add(const std::string& name, Tensor init) {
        params_.push_back(Param{name, std::move(init), {}, {}, {}});
        Param& p = params_.back();
        p.grad = Tensor(p.value.shape);
        p.adam_m = Tensor(p.value.shape);
        p.adam_v = Tensor(p.value.shape);
        return p;
    }

    std::vector<Param*> all() {
        std::vector<Param*> out;
        for (auto& p : params_) out.push_back(&p);
        return out;
    }
    std::vector<const Param*> all() const {
        std::vector<const Param*> out;
        for (auto& p : params_) out.push_back(&p);
        return out;
    }

    Param* find(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    int64_t total_numel() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

private:
    std::deque<Param> params_;  // stable addresses
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;
    std::vector<Var> inputs;
    std::function<void(Node&)> back;  // reads this->grad, accumulates into inputs
    Param* param = nullptr;
};

// Dynamic computation graph; build ops, then call backward on a scalar node.
// Nodes are created in topological order, so backward walks creation order in
// reverse.
class Graph {
public:
    Var leaf(Param& p);                // cached per graph
    Var constant(Tensor t);            // no gradient flows out
    Var input(Tensor t);               // like constant; alias for readability

    // Elementwise
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var relu(Var a);
    Var silu(Var a);
    Var sigmoid(Var a);
    Var exp(Var a);
    Var clamp01_st(Var a);  // clamp with straight-through-zero gradient outside

    // Shape
    Var reshape(Var a, std::vector<int> shape);
    Var chw_to_tokens(Var a);  // [c,h,w] -> [h*w, c]
    Var tokens_to_chw(Var a, int c, int h, int w);
    Var concat_cols(Var a, Var b);      // [m,k1]+[m,k2] -> [m,k1+k2]
    Var concat_chan(Var a, Var b);      // [c1,h,w]+[c2,h,w]
    Var transpose2d(Var a);

    // Linear algebra
    Var matmul(Var a, Var b);                   // [m,k]x[k,n]
    Var linear(Var x, Var w, Var b);            // [n,din]x[din,dout]+[dout]
    Var add_row(Var a, Var b);                  // [m,n] + [n] broadcast
    Var softmax_rows(Var a);

    // Windowed attention support: extract a win x win patch as [win*win, c]
    // tokens, and reassemble a full map from row-major window token blocks.
    Var extract_window(Var x, int y0, int x0, int win);
    Var assemble_windows(std::vector<Var> windows, int c, int h, int w, int win);

    // Conv / spatial, single sample [c,h,w]
    Var conv2d(Var x, Var w, Var b, int stride, int pad);
    Var upsample2x(Var x);
    Var add_channel_bias(Var x, Var b);  // [c,h,w] + [c]
    // Normalize over all elements, per-channel affine (gamma, beta of len c).
    Var norm_cs(Var x, Var gamma, Var beta);

    // Reductions -> scalar (shape [1])
    Var mean_all(Var a);
    Var sum_all(Var a);
    Var mse_to(Var a, const Tensor& target);   // element-mean squared error
    Var l1_to(Var a, const Tensor& target);    // element-mean absolute error
    Var weighted_sum(Var a, const Tensor& wts);

    void backward(const Var& loss);
    // Copy accumulated leaf gradients into their Params (+=).
    void flush_param_grads();

private:
    Var make(Tensor val, std::vector<Var> inputs, std::function<void(Node&)> back);
    std::vector<Var> order_;
    std::unordered_map<Param*, Var> leaves_;
};

// Decoupled-weight-decay Adam.
class AdamW {
public:
    AdamW(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8, double weight_decay = 0.0)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
          wd_(weight_decay) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }
    void step();

private:
    std::vector<Param*> params_;
    double lr_, beta1_, beta2_, eps_, wd_;
    int64_t t_ = 0;
};

}  // namespace degforge::nn
