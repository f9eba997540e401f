#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "degforge/rng.hpp"

namespace degforge::nn {

// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(numel_of(shape), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<int64_t>(v.size()) != numel_of(shape))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dim");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    double& operator[](int64_t i) { return v[i]; }
    double operator[](int64_t i) const { return v[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor randn(std::vector<int> s, Rng& rng, double std = 1.0) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = rng.normal() * std;
        return t;
    }

    std::string shape_str() const {
        std::string out = "[";
        for (size_t i = 0; i < shape.size(); ++i)
            out += (i ? "," : "") + std::to_string(shape[i]);
        return out + "]";
    }
};

inline void require_shape(const Tensor& t, const std::vector<int>& s, const char* what) {
    if (t.shape != s)
        throw std::invalid_argument(std::string(what) + ": unexpected shape " + t.shape_str());
}

}  // namespace degforge::nn
