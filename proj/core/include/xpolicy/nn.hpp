#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "xpolicy/rng.hpp"
#include "xpolicy/tensor.hpp"

namespace xpolicy {

/// Named registry of trainable tensors. Tensors are shared handles, so the
/// optimizer mutating a registered parameter is visible to the module that
/// owns it. Registration order is the canonical parameter order everywhere
/// (optimizer moments, EMA, checkpoints).
template <typename T>
struct ParamSet {
    std::vector<std::pair<std::string, Tensor<T>>> items;

    Tensor<T> add(const std::string& name, Tensor<T> t) {
        for (const auto& [n, u] : items)
            if (n == name) throw layout_error("duplicate parameter name '" + name + "'");
        t.set_requires_grad(true);
        items.emplace_back(name, t);
        return t;
    }

    Tensor<T>& find(const std::string& name) {
        for (auto& [n, t] : items)
            if (n == name) return t;
        throw layout_error("no parameter named '" + name + "'");
    }

    long total_size() const {
        long n = 0;
        for (const auto& [k, t] : items) n += t.numel();
        return n;
    }
};

namespace init {

template <typename T>
Tensor<T> normal(Shape shape, Rng& rng, double stddev) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
    return t;
}

/// Fan-in scaled init for linear weights.
template <typename T>
Tensor<T> lecun(Shape shape, Rng& rng) {
    const double fan_in = static_cast<double>(shape[0]);
    return normal<T>(std::move(shape), rng, 1.0 / std::sqrt(fan_in));
}

}  // namespace init

template <typename T>
struct LinearLayer {
    Tensor<T> w, b;

    LinearLayer() = default;

    LinearLayer(long in, long out, Rng& rng, ParamSet<T>& ps, const std::string& name, bool zero_init = false)
        : w(ps.add(name + ".w", zero_init ? Tensor<T>::zeros({in, out}) : init::lecun<T>({in, out}, rng))),
          b(ps.add(name + ".b", Tensor<T>::zeros({out}))) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return bias_add(matmul(x, w), b); }
};

template <typename T>
struct RmsNormLayer {
    Tensor<T> gain;

    RmsNormLayer() = default;

    RmsNormLayer(long dim, ParamSet<T>& ps, const std::string& name)
        : gain(ps.add(name + ".gain", Tensor<T>::full({dim}, T(1)))) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return rms_norm(x, gain); }
};

/// Two-layer projector: linear -> RMS norm -> GELU -> linear.
template <typename T>
struct Projector {
    LinearLayer<T> in;
    RmsNormLayer<T> norm;
    LinearLayer<T> out;

    Projector() = default;

    Projector(long in_dim, long hidden, long out_dim, Rng& rng, ParamSet<T>& ps, const std::string& name)
        : in(in_dim, hidden, rng, ps, name + ".in"),
          norm(hidden, ps, name + ".norm"),
          out(hidden, out_dim, rng, ps, name + ".out") {}

    Tensor<T> operator()(const Tensor<T>& x) const { return out(gelu(norm(in(x)))); }
};

/// Position-encoding vector: interleaved sin/cos at geometric frequencies.
template <typename T>
std::vector<T> sinusoid_row(double position, long dim, double base = 10000.0) {
    if (dim < 2 || dim % 2 != 0) throw shape_error("sinusoidal embedding needs even dim >= 2");
    std::vector<T> row(static_cast<size_t>(dim));
    for (long i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        row[static_cast<size_t>(2 * i)] = static_cast<T>(std::sin(position * freq));
        row[static_cast<size_t>(2 * i + 1)] = static_cast<T>(std::cos(position * freq));
    }
    return row;
}

template <typename T>
Tensor<T> sinusoid_embedding(double position, long dim) {
    return Tensor<T>::from({dim}, sinusoid_row<T>(position, dim));
}

/// Rows 0..count-1 stacked, a (count, dim) constant.
template <typename T>
Tensor<T> sinusoid_table(long count, long dim) {
    std::vector<T> data;
    data.reserve(static_cast<size_t>(count * dim));
    for (long p = 0; p < count; ++p) {
        auto row = sinusoid_row<T>(static_cast<double>(p), dim);
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor<T>::from({count, dim}, std::move(data));
}

/// Repeats a (rows, dim) constant into (batch, rows, dim). For gradient-free
/// constants only; use bias_add/row_scale to broadcast parameters.
template <typename T>
Tensor<T> tile_const(const Tensor<T>& m, long batch) {
    if (m.rank() != 2 || m.requires_grad()) throw shape_error("tile_const wants a rank-2 constant");
    std::vector<T> data;
    data.reserve(static_cast<size_t>(batch * m.numel()));
    for (long b = 0; b < batch; ++b) data.insert(data.end(), m.data().begin(), m.data().end());
    return Tensor<T>::from({batch, m.dim(0), m.dim(1)}, std::move(data));
}

}  // namespace xpolicy
