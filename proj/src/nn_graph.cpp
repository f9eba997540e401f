#include "degforge/nn/graph.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace degforge::nn {

namespace {
using EMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}  // namespace

Var Graph::make(Tensor val, std::vector<Var> inputs, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->grad = Tensor(n->val.shape);
    n->inputs = std::move(inputs);
    n->back = std::move(back);
    order_.push_back(n);
    return n;
}

Var Graph::leaf(Param& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return it->second;
    Var v = make(p.value, {}, nullptr);
    v->param = &p;
    leaves_[&p] = v;
    return v;
}

Var Graph::constant(Tensor t) { return make(std::move(t), {}, nullptr); }
Var Graph::input(Tensor t) { return constant(std::move(t)); }

Var Graph::add(Var a, Var b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i];
            n.inputs[1]->grad[i] += n.grad[i];
        }
    });
}

Var Graph::sub(Var a, Var b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i];
            n.inputs[1]->grad[i] -= n.grad[i];
        }
    });
}

Var Graph::mul(Var a, Var b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i] * n.inputs[1]->val[i];
            n.inputs[1]->grad[i] += n.grad[i] * n.inputs[0]->val[i];
        }
    });
}

Var Graph::scale(Var a, double c) {
    Tensor out = a->val;
    for (auto& x : out.v) x *= c;
    return make(std::move(out), {a}, [c](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) n.inputs[0]->grad[i] += n.grad[i] * c;
    });
}

Var Graph::relu(Var a) {
    Tensor out = a->val;
    for (auto& x : out.v)
        if (x < 0) x = 0;
    return make(std::move(out), {a}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (n.inputs[0]->val[i] > 0) n.inputs[0]->grad[i] += n.grad[i];
    });
}

Var Graph::silu(Var a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x / (1.0 + std::exp(-x));
    return make(std::move(out), {a}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            double x = n.inputs[0]->val[i];
            double s = 1.0 / (1.0 + std::exp(-x));
            n.inputs[0]->grad[i] += n.grad[i] * s * (1.0 + x * (1.0 - s));
        }
    });
}

Var Graph::sigmoid(Var a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    return make(std::move(out), {a}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            double y = n.val[i];
            n.inputs[0]->grad[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

Var Graph::exp(Var a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = std::exp(x);
    return make(std::move(out), {a}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            n.inputs[0]->grad[i] += n.grad[i] * n.val[i];
    });
}

Var Graph::clamp01_st(Var a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x < 0 ? 0 : (x > 1 ? 1 : x);
    return make(std::move(out), {a}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            double x = n.inputs[0]->val[i];
            if (x >= 0.0 && x <= 1.0) n.inputs[0]->grad[i] += n.grad[i];
        }
    });
}

Var Graph::reshape(Var a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != a->val.numel())
        throw std::invalid_argument("reshape: numel mismatch");
    Tensor out(shape, a->val.v);
    return make(std::move(out), {a}, [](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) n.inputs[0]->grad[i] += n.grad[i];
    });
}

Var Graph::chw_to_tokens(Var a) {
    if (a->val.shape.size() != 3) throw std::invalid_argument("chw_to_tokens: want [c,h,w]");
    int c = a->val.shape[0], h = a->val.shape[1], w = a->val.shape[2];
    Tensor out({h * w, c});
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h * w; ++i) out[static_cast<int64_t>(i) * c + ci] = a->val[static_cast<int64_t>(ci) * h * w + i];
    return make(std::move(out), {a}, [c, h, w](Node& n) {
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < h * w; ++i)
                n.inputs[0]->grad[static_cast<int64_t>(ci) * h * w + i] +=
                    n.grad[static_cast<int64_t>(i) * c + ci];
    });
}

Var Graph::tokens_to_chw(Var a, int c, int h, int w) {
    if (a->val.shape.size() != 2 || a->val.shape[0] != h * w || a->val.shape[1] != c)
        throw std::invalid_argument("tokens_to_chw: shape mismatch");
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h * w; ++i)
            out[static_cast<int64_t>(ci) * h * w + i] = a->val[static_cast<int64_t>(i) * c + ci];
    return make(std::move(out), {a}, [c, h, w](Node& n) {
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < h * w; ++i)
                n.inputs[0]->grad[static_cast<int64_t>(i) * c + ci] +=
                    n.grad[static_cast<int64_t>(ci) * h * w + i];
    });
}

Var Graph::concat_cols(Var a, Var b) {
    if (a->val.shape.size() != 2 || b->val.shape.size() != 2 ||
        a->val.shape[0] != b->val.shape[0])
        throw std::invalid_argument("concat_cols: shape mismatch");
    int m = a->val.shape[0], k1 = a->val.shape[1], k2 = b->val.shape[1];
    Tensor out({m, k1 + k2});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k1; ++j) out[static_cast<int64_t>(i) * (k1 + k2) + j] = a->val[static_cast<int64_t>(i) * k1 + j];
        for (int j = 0; j < k2; ++j) out[static_cast<int64_t>(i) * (k1 + k2) + k1 + j] = b->val[static_cast<int64_t>(i) * k2 + j];
    }
    return make(std::move(out), {a, b}, [m, k1, k2](Node& n) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < k1; ++j)
                n.inputs[0]->grad[static_cast<int64_t>(i) * k1 + j] += n.grad[static_cast<int64_t>(i) * (k1 + k2) + j];
            for (int j = 0; j < k2; ++j)
                n.inputs[1]->grad[static_cast<int64_t>(i) * k2 + j] += n.grad[static_cast<int64_t>(i) * (k1 + k2) + k1 + j];
        }
    });
}

Var Graph::concat_chan(Var a, Var b) {
    if (a->val.shape.size() != 3 || b->val.shape.size() != 3 ||
        a->val.shape[1] != b->val.shape[1] || a->val.shape[2] != b->val.shape[2])
        throw std::invalid_argument("concat_chan: shape mismatch");
    int c1 = a->val.shape[0], c2 = b->val.shape[0];
    int hw = a->val.shape[1] * a->val.shape[2];
    Tensor out({c1 + c2, a->val.shape[1], a->val.shape[2]});
    std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
    std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + static_cast<int64_t>(c1) * hw);
    return make(std::move(out), {a, b}, [c1, c2, hw](Node& n) {
        for (int64_t i = 0; i < static_cast<int64_t>(c1) * hw; ++i)
            n.inputs[0]->grad[i] += n.grad[i];
        for (int64_t i = 0; i < static_cast<int64_t>(c2) * hw; ++i)
            n.inputs[1]->grad[i] += n.grad[static_cast<int64_t>(c1) * hw + i];
    });
}

Var Graph::transpose2d(Var a) {
    if (a->val.shape.size() != 2) throw std::invalid_argument("transpose2d: want 2-D");
    int m = a->val.shape[0], k = a->val.shape[1];
    Tensor out({k, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) out[static_cast<int64_t>(j) * m + i] = a->val[static_cast<int64_t>(i) * k + j];
    return make(std::move(out), {a}, [m, k](Node& n) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j)
                n.inputs[0]->grad[static_cast<int64_t>(i) * k + j] += n.grad[static_cast<int64_t>(j) * m + i];
    });
}

Var Graph::matmul(Var a, Var b) {
    if (a->val.shape.size() != 2 || b->val.shape.size() != 2 ||
        a->val.shape[1] != b->val.shape[0])
        throw std::invalid_argument("matmul: shape mismatch");
    int m = a->val.shape[0], k = a->val.shape[1], n2 = b->val.shape[1];
    Tensor out({m, n2});
    EMap(out.v.data(), m, n2).noalias() = CMap(a->val.v.data(), m, k) * CMap(b->val.v.data(), k, n2);
    return make(std::move(out), {a, b}, [m, k, n2](Node& n) {
        const auto& A = n.inputs[0]->val;
        const auto& B = n.inputs[1]->val;
        // Skip gradient sides nothing consumes (pure constant inputs).
        if (n.inputs[0]->back || n.inputs[0]->param)
            EMap(n.inputs[0]->grad.v.data(), m, k).noalias() +=
                CMap(n.grad.v.data(), m, n2) * CMap(B.v.data(), k, n2).transpose();
        if (n.inputs[1]->back || n.inputs[1]->param)
            EMap(n.inputs[1]->grad.v.data(), k, n2).noalias() +=
                CMap(A.v.data(), m, k).transpose() * CMap(n.grad.v.data(), m, n2);
    });
}

Var Graph::add_row(Var a, Var b) {
    if (a->val.shape.size() != 2 || b->val.shape.size() != 1 ||
        a->val.shape[1] != b->val.shape[0])
        throw std::invalid_argument("add_row: shape mismatch");
    int m = a->val.shape[0], n2 = a->val.shape[1];
    Tensor out = a->val;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n2; ++j) out[static_cast<int64_t>(i) * n2 + j] += b->val[j];
    return make(std::move(out), {a, b}, [m, n2](Node& n) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n2; ++j) {
                double g = n.grad[static_cast<int64_t>(i) * n2 + j];
                n.inputs[0]->grad[static_cast<int64_t>(i) * n2 + j] += g;
                n.inputs[1]->grad[j] += g;
            }
    });
}

Var Graph::linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var Graph::softmax_rows(Var a) {
    if (a->val.shape.size() != 2) throw std::invalid_argument("softmax_rows: want 2-D");
    int m = a->val.shape[0], n2 = a->val.shape[1];
    Tensor out = a->val;
    for (int i = 0; i < m; ++i) {
        double* row = &out.v[static_cast<int64_t>(i) * n2];
        double mx = row[0];
        for (int j = 1; j < n2; ++j) mx = std::max(mx, row[j]);
        double sum = 0;
        for (int j = 0; j < n2; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < n2; ++j) row[j] /= sum;
    }
    return make(std::move(out), {a}, [m, n2](Node& n) {
        for (int i = 0; i < m; ++i) {
            const double* y = &n.val.v[static_cast<int64_t>(i) * n2];
            const double* g = &n.grad.v[static_cast<int64_t>(i) * n2];
            double dot = 0;
            for (int j = 0; j < n2; ++j) dot += y[j] * g[j];
            for (int j = 0; j < n2; ++j)
                n.inputs[0]->grad[static_cast<int64_t>(i) * n2 + j] += y[j] * (g[j] - dot);
        }
    });
}

Var Graph::extract_window(Var x, int y0, int x0, int win) {
    if (x->val.shape.size() != 3) throw std::invalid_argument("extract_window: want [c,h,w]");
    int c = x->val.shape[0], h = x->val.shape[1], w = x->val.shape[2];
    if (y0 + win > h || x0 + win > w) throw std::invalid_argument("extract_window: out of range");
    Tensor out({win * win, c});
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j)
            for (int ci = 0; ci < c; ++ci)
                out[(static_cast<int64_t>(i) * win + j) * c + ci] =
                    x->val[(static_cast<int64_t>(ci) * h + y0 + i) * w + x0 + j];
    return make(std::move(out), {x}, [c, h, w, y0, x0, win](Node& n) {
        for (int i = 0; i < win; ++i)
            for (int j = 0; j < win; ++j)
                for (int ci = 0; ci < c; ++ci)
                    n.inputs[0]->grad[(static_cast<int64_t>(ci) * h + y0 + i) * w + x0 + j] +=
                        n.grad[(static_cast<int64_t>(i) * win + j) * c + ci];
    });
}

Var Graph::assemble_windows(std::vector<Var> windows, int c, int h, int w, int win) {
    int ny = h / win, nx = w / win;
    if (static_cast<int>(windows.size()) != ny * nx)
        throw std::invalid_argument("assemble_windows: window count mismatch");
    Tensor out({c, h, w});
    for (int wy = 0; wy < ny; ++wy)
        for (int wx = 0; wx < nx; ++wx) {
            const Tensor& t = windows[static_cast<size_t>(wy) * nx + wx]->val;
            if (t.shape != std::vector<int>{win * win, c})
                throw std::invalid_argument("assemble_windows: bad window shape");
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j)
                    for (int ci = 0; ci < c; ++ci)
                        out[(static_cast<int64_t>(ci) * h + wy * win + i) * w + wx * win + j] =
                            t[(static_cast<int64_t>(i) * win + j) * c + ci];
        }
    return make(std::move(out), std::move(windows), [c, h, w, win](Node& n) {
        int nx = w / win;
        for (size_t k = 0; k < n.inputs.size(); ++k) {
            int wy = static_cast<int>(k) / nx, wx = static_cast<int>(k) % nx;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j)
                    for (int ci = 0; ci < c; ++ci)
                        n.inputs[k]->grad[(static_cast<int64_t>(i) * win + j) * c + ci] +=
                            n.grad[(static_cast<int64_t>(ci) * h + wy * win + i) * w + wx * win +
                                   j];
        }
    });
}

Var Graph::conv2d(Var x, Var w, Var b, int stride, int pad) {
    if (x->val.shape.size() != 3 || w->val.shape.size() != 4 || b->val.shape.size() != 1)
        throw std::invalid_argument("conv2d: bad ranks");
    int ic = x->val.shape[0], h = x->val.shape[1], wd = x->val.shape[2];
    int oc = w->val.shape[0], kic = w->val.shape[1], kh = w->val.shape[2], kw = w->val.shape[3];
    if (kic != ic || b->val.shape[0] != oc) throw std::invalid_argument("conv2d: channel mismatch");
    int oh = (h + 2 * pad - kh) / stride + 1;
    int ow = (wd + 2 * pad - kw) / stride + 1;
    const int64_t K = static_cast<int64_t>(ic) * kh * kw;
    const int64_t npix = static_cast<int64_t>(oh) * ow;

    // im2col: patches [oh*ow, ic*kh*kw], zero-padded out-of-range taps.
    auto im2col = [=](const Tensor& X) {
        std::vector<double> P(static_cast<size_t>(npix * K), 0.0);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double* prow = &P[static_cast<size_t>((static_cast<int64_t>(oy) * ow + ox) * K)];
                int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                for (int i = 0; i < ic; ++i)
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ix0 + kx;
                            if (ix < 0 || ix >= wd) continue;
                            prow[(static_cast<int64_t>(i) * kh + ky) * kw + kx] =
                                X[(static_cast<int64_t>(i) * h + iy) * wd + ix];
                        }
                    }
            }
        return P;
    };

    Tensor out({oc, oh, ow});
    {
        std::vector<double> P = im2col(x->val);
        EMap(out.v.data(), oc, npix).noalias() =
            CMap(w->val.v.data(), oc, K) * CMap(P.data(), npix, K).transpose();
        for (int o = 0; o < oc; ++o)
            for (int64_t j = 0; j < npix; ++j) out[o * npix + j] += b->val[o];
    }
    return make(std::move(out), {x, w, b},
                [=](Node& n) {
        const auto& W = n.inputs[1]->val;
        auto& dX = n.inputs[0]->grad;
        auto& dB = n.inputs[2]->grad;
        std::vector<double> P = im2col(n.inputs[0]->val);
        CMap G(n.grad.v.data(), oc, npix);
        EMap(n.inputs[1]->grad.v.data(), oc, K).noalias() += G * CMap(P.data(), npix, K);
        for (int o = 0; o < oc; ++o) dB[o] += G.row(o).sum();
        if (!(n.inputs[0]->back || n.inputs[0]->param)) return;
        // dP = G^T W, then col2im scatter-add into dX.
        std::vector<double> dP(static_cast<size_t>(npix * K));
        EMap(dP.data(), npix, K).noalias() = G.transpose() * CMap(W.v.data(), oc, K);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double* prow =
                    &dP[static_cast<size_t>((static_cast<int64_t>(oy) * ow + ox) * K)];
                int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                for (int i = 0; i < ic; ++i)
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ix0 + kx;
                            if (ix < 0 || ix >= wd) continue;
                            dX[(static_cast<int64_t>(i) * h + iy) * wd + ix] +=
                                prow[(static_cast<int64_t>(i) * kh + ky) * kw + kx];
                        }
                    }
            }
    });
}

Var Graph::upsample2x(Var x) {
    if (x->val.shape.size() != 3) throw std::invalid_argument("upsample2x: want [c,h,w]");
    int c = x->val.shape[0], h = x->val.shape[1], w = x->val.shape[2];
    Tensor out({c, h * 2, w * 2});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h * 2; ++y)
            for (int xx = 0; xx < w * 2; ++xx)
                out[(static_cast<int64_t>(ci) * h * 2 + y) * w * 2 + xx] =
                    x->val[(static_cast<int64_t>(ci) * h + y / 2) * w + xx / 2];
    return make(std::move(out), {x}, [c, h, w](Node& n) {
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h * 2; ++y)
                for (int xx = 0; xx < w * 2; ++xx)
                    n.inputs[0]->grad[(static_cast<int64_t>(ci) * h + y / 2) * w + xx / 2] +=
                        n.grad[(static_cast<int64_t>(ci) * h * 2 + y) * w * 2 + xx];
    });
}

Var Graph::add_channel_bias(Var x, Var b) {
    if (x->val.shape.size() != 3 || b->val.shape.size() != 1 ||
        b->val.shape[0] != x->val.shape[0])
        throw std::invalid_argument("add_channel_bias: shape mismatch");
    int c = x->val.shape[0];
    int64_t hw = static_cast<int64_t>(x->val.shape[1]) * x->val.shape[2];
    Tensor out = x->val;
    for (int ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < hw; ++i) out[ci * hw + i] += b->val[ci];
    return make(std::move(out), {x, b}, [c, hw](Node& n) {
        for (int ci = 0; ci < c; ++ci)
            for (int64_t i = 0; i < hw; ++i) {
                double g = n.grad[ci * hw + i];
                n.inputs[0]->grad[ci * hw + i] += g;
                n.inputs[1]->grad[ci] += g;
            }
    });
}

Var Graph::norm_cs(Var x, Var gamma, Var beta) {
    if (x->val.shape.size() != 3) throw std::invalid_argument("norm_cs: want [c,h,w]");
    int c = x->val.shape[0];
    int64_t hw = static_cast<int64_t>(x->val.shape[1]) * x->val.shape[2];
    int64_t n_el = c * hw;
    const double eps = 1e-5;
    double mean = 0;
    for (double v : x->val.v) mean += v;
    mean /= static_cast<double>(n_el);
    double var = 0;
    for (double v : x->val.v) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n_el);
    double inv = 1.0 / std::sqrt(var + eps);
    Tensor out(x->val.shape);
    for (int ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < hw; ++i) {
            double xh = (x->val[ci * hw + i] - mean) * inv;
            out[ci * hw + i] = gamma->val[ci] * xh + beta->val[ci];
        }
    return make(std::move(out), {x, gamma, beta}, [c, hw, n_el, mean, inv](Node& n) {
        // xhat = (x - mean)*inv; y = gamma*xhat + beta
        std::vector<double> dxhat(static_cast<size_t>(n_el));
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int ci = 0; ci < c; ++ci)
            for (int64_t i = 0; i < hw; ++i) {
                int64_t idx = ci * hw + i;
                double xh = (n.inputs[0]->val[idx] - mean) * inv;
                double g = n.grad[idx];
                n.inputs[1]->grad[ci] += g * xh;
                n.inputs[2]->grad[ci] += g;
                double dxh = g * n.inputs[1]->val[ci];
                dxhat[static_cast<size_t>(idx)] = dxh;
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh;
            }
        double m1 = sum_dxhat / static_cast<double>(n_el);
        double m2 = sum_dxhat_xhat / static_cast<double>(n_el);
        for (int64_t idx = 0; idx < n_el; ++idx) {
            double xh = (n.inputs[0]->val[idx] - mean) * inv;
            n.inputs[0]->grad[idx] += inv * (dxhat[static_cast<size_t>(idx)] - m1 - xh * m2);
        }
    });
}

Var Graph::mean_all(Var a) {
    double s = 0;
    for (double v : a->val.v) s += v;
    int64_t n_el = a->val.numel();
    Tensor out({1});
    out[0] = s / static_cast<double>(n_el);
    return make(std::move(out), {a}, [n_el](Node& n) {
        double g = n.grad[0] / static_cast<double>(n_el);
        for (int64_t i = 0; i < n_el; ++i) n.inputs[0]->grad[i] += g;
    });
}

Var Graph::sum_all(Var a) {
    double s = 0;
    for (double v : a->val.v) s += v;
    Tensor out({1});
    out[0] = s;
    return make(std::move(out), {a}, [](Node& n) {
        double g = n.grad[0];
        for (int64_t i = 0; i < n.inputs[0]->grad.numel(); ++i) n.inputs[0]->grad[i] += g;
    });
}

Var Graph::mse_to(Var a, const Tensor& target) {
    if (!a->val.same_shape(target)) throw std::invalid_argument("mse_to: shape mismatch");
    int64_t n_el = a->val.numel();
    double s = 0;
    for (int64_t i = 0; i < n_el; ++i) {
        double d = a->val[i] - target[i];
        s += d * d;
    }
    Tensor out({1});
    out[0] = s / static_cast<double>(n_el);
    Tensor tgt = target;
    return make(std::move(out), {a}, [n_el, tgt = std::move(tgt)](Node& n) {
        double g = n.grad[0] * 2.0 / static_cast<double>(n_el);
        for (int64_t i = 0; i < n_el; ++i)
            n.inputs[0]->grad[i] += g * (n.inputs[0]->val[i] - tgt[i]);
    });
}

Var Graph::l1_to(Var a, const Tensor& target) {
    if (!a->val.same_shape(target)) throw std::invalid_argument("l1_to: shape mismatch");
    int64_t n_el = a->val.numel();
    double s = 0;
    for (int64_t i = 0; i < n_el; ++i) s += std::fabs(a->val[i] - target[i]);
    Tensor out({1});
    out[0] = s / static_cast<double>(n_el);
    Tensor tgt = target;
    return make(std::move(out), {a}, [n_el, tgt = std::move(tgt)](Node& n) {
        double g = n.grad[0] / static_cast<double>(n_el);
        for (int64_t i = 0; i < n_el; ++i) {
            double d = n.inputs[0]->val[i] - tgt[i];
            n.inputs[0]->grad[i] += g * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
        }
    });
}

Var Graph::weighted_sum(Var a, const Tensor& wts) {
    if (!a->val.same_shape(wts)) throw std::invalid_argument("weighted_sum: shape mismatch");
    double s = 0;
    for (int64_t i = 0; i < a->val.numel(); ++i) s += a->val[i] * wts[i];
    Tensor out({1});
    out[0] = s;
    Tensor w = wts;
    return make(std::move(out), {a}, [w = std::move(w)](Node& n) {
        double g = n.grad[0];
        for (int64_t i = 0; i < n.inputs[0]->grad.numel(); ++i)
            n.inputs[0]->grad[i] += g * w[i];
    });
}

void Graph::backward(const Var& loss) {
    if (loss->val.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    loss->grad[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it)
        if ((*it)->back) (*it)->back(**it);
}

void Graph::flush_param_grads() {
    for (auto& [p, v] : leaves_)
        for (int64_t i = 0; i < v->grad.numel(); ++i) p->grad[i] += v->grad[i];
}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto* p : params_) {
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            double g = p->grad[i];
            p->adam_m[i] = beta1_ * p->adam_m[i] + (1 - beta1_) * g;
            p->adam_v[i] = beta2_ * p->adam_v[i] + (1 - beta2_) * g * g;
            double mh = p->adam_m[i] / bc1;
            double vh = p->adam_v[i] / bc2;
            p->value[i] -= lr_ * (mh / (std::sqrt(vh) + eps_) + wd_ * p->value[i]);
        }
    }
}

}  // namespace degforge::nn
