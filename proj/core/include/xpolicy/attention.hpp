#pragma once

#include <cmath>
#include <limits>

#include "xpolicy/nn.hpp"
#include "xpolicy/tensor.hpp"

namespace xpolicy {

/// Lower-triangular (inclusive) allow-matrix: position t sees 0..t.
inline BoolMat causal_mask(long T) {
    BoolMat m(T, T);
    for (long r = 0; r < T; ++r)
        for (long c = 0; c <= r; ++c) m.at(r, c) = 1;
    return m;
}

inline BoolMat full_mask(long rows, long cols) { return BoolMat(rows, cols, true); }

/// (B, N, E) -> (B*H, N, E/H)
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, long H) {
    const long B = x.dim(0), N = x.dim(1), E = x.dim(2);
    return reshape(transpose(reshape(x, {B, N, H, E / H}), 1, 2), {B * H, N, E / H});
}

/// (B*H, N, dh) -> (B, N, H*dh)
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, long H) {
    const long BH = x.dim(0), N = x.dim(1), dh = x.dim(2);
    return reshape(transpose(reshape(x, {BH / H, H, N, dh}), 1, 2), {BH / H, N, H * dh});
}

/// Multi-head attention with QKNorm: per-head L2-normalized q/k rows scaled
/// by a learned per-head temperature (init sqrt(head_dim), the unit-norm
/// equivalent of 1/sqrt(head_dim) logit scaling).
template <typename T>
struct MultiheadAttention {
    LinearLayer<T> q, k, v, o;
    Tensor<T> temps;
    long H = 1;

    MultiheadAttention() = default;

    MultiheadAttention(long E, long heads, Rng& rng, ParamSet<T>& ps, const std::string& name)
        : q(E, E, rng, ps, name + ".q"),
          k(E, E, rng, ps, name + ".k"),
          v(E, E, rng, ps, name + ".v"),
          o(E, E, rng, ps, name + ".o"),
          temps(ps.add(name + ".temps",
                       Tensor<T>::full({heads}, static_cast<T>(std::sqrt(static_cast<double>(E / heads)))))),
          H(heads) {}

    /// queries from x (B, N, E), keys/values from kv (B, M, E); mask optional
    /// over (N, M). Attention-score work per head is N*M (or the mask's
    /// allowed-entry count).
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& kv, const BoolMat* mask) const {
        auto qh = l2_normalize_lastdim(split_heads(q(x), H));
        auto kh = l2_normalize_lastdim(split_heads(k(kv), H));
        auto vh = split_heads(v(kv), H);
        auto scores = head_scale(matmul_nt(qh, kh), temps, H);
        if (mask) scores = masked_fill(scores, *mask, -std::numeric_limits<T>::infinity());
        return o(merge_heads(matmul(softmax_lastdim(scores), vh), H));
    }
};

}  // namespace xpolicy
