#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "xpolicy/attention.hpp"
#include "xpolicy/tokenizer.hpp"

namespace xpolicy {

/// Which observation tokens each action token may read.
enum class CrossScope { Aligned, Full };

inline CrossScope cross_scope_from(const std::string& s) {
    if (s == "aligned") return CrossScope::Aligned;
    if (s == "full") return CrossScope::Full;
    throw layout_error("unknown cross attn scope '" + s + "'");
}

/// Aligned scope: action token i reads the S tokens of observation timestep
/// min(i, h-1); with h=2 that is one state's worth per token, n*S entries.
inline BoolMat aligned_cross_mask(long n, long h, long S) {
    if (n < 1 || h < 1 || S < 1) throw alignment_error("cross-attention map needs n, h, S >= 1");
    BoolMat m(n, h * S);
    for (long i = 0; i < n; ++i) {
        const long t = std::min(i, h - 1);
        for (long s = 0; s < S; ++s) m.at(i, t * S + s) = 1;
    }
    return m;
}

/// Sinusoidal embedding of the diffusion step, refined by a two-layer MLP.
/// Deterministic in k; one row per batch sample.
template <typename T>
struct TimestepEmbed {
    LinearLayer<T> in, out;
    long embed = 0;

    TimestepEmbed() = default;

    TimestepEmbed(long E, Rng& rng, ParamSet<T>& ps, const std::string& name)
        : in(E, E, rng, ps, name + ".in"), out(E, E, rng, ps, name + ".out"), embed(E) {}

    Tensor<T> operator()(const std::vector<long>& ks) const {
        std::vector<T> rows;
        rows.reserve(ks.size() * static_cast<size_t>(embed));
        for (long k : ks) {
            auto r = sinusoid_row<T>(static_cast<double>(k), embed);
            rows.insert(rows.end(), r.begin(), r.end());
        }
        auto base = Tensor<T>::from({static_cast<long>(ks.size()), embed}, std::move(rows));
        return out(gelu(in(base)));
    }
};

/// Denoiser block. The step embedding drives shift/scale/gate modulation of
/// the self-attention and MLP branches through a zero-initialized linear map,
/// and a zero-initialized gate on the cross-attention branch, so the block is
/// exactly the identity at initialization.
template <typename T>
struct DecoderBlock {
    RmsNormLayer<T> n_sa, n_x, n_m;
    MultiheadAttention<T> self_attn, cross_attn;
    LinearLayer<T> mlp_in, mlp_out;
    LinearLayer<T> mod;     // E -> 6E: shift1, scale1, gate1, shift2, scale2, gate2
    LinearLayer<T> gate_x;  // E -> E: cross-attention gate

    DecoderBlock(const ModelDims& d, Rng& rng, ParamSet<T>& ps, const std::string& name)
        : n_sa(d.embed, ps, name + ".n_sa"),
          n_x(d.embed, ps, name + ".n_x"),
          n_m(d.embed, ps, name + ".n_m"),
          self_attn(d.embed, d.heads, rng, ps, name + ".sa"),
          cross_attn(d.embed, d.heads, rng, ps, name + ".xa"),
          mlp_in(d.embed, d.embed * d.mlp_ratio, rng, ps, name + ".mlp_in"),
          mlp_out(d.embed * d.mlp_ratio, d.embed, rng, ps, name + ".mlp_out"),
          mod(d.embed, 6 * d.embed, rng, ps, name + ".mod", /*zero_init=*/true),
          gate_x(d.embed, d.embed, rng, ps, name + ".gate_x", /*zero_init=*/true) {}

    /// x (B,n,E), obs (B,h*S,E), temb (B,E); mask over (n, h*S).
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& obs, const Tensor<T>& temb,
                         const BoolMat& cross_mask) const {
        const long E = x.dim(2);
        auto m = mod(temb);
        auto shift1 = slice(m, 1, 0, E), scale1 = slice(m, 1, E, E), gate1 = slice(m, 1, 2 * E, E);
        auto shift2 = slice(m, 1, 3 * E, E), scale2 = slice(m, 1, 4 * E, E), gate2 = slice(m, 1, 5 * E, E);

        auto h1 = bias_add(row_scale(n_sa(x), add_scalar(scale1, T(1))), shift1);
        auto x1 = add(x, row_scale(self_attn(h1, h1, nullptr), gate1));
        auto x2 = add(x1, row_scale(cross_attn(n_x(x1), obs, &cross_mask), gate_x(temb)));
        auto h2 = bias_add(row_scale(n_m(x2), add_scalar(scale2, T(1))), shift2);
        return add(x2, row_scale(mlp_out(gelu(mlp_in(h2))), gate2));
    }
};

/// Noise-prediction network: project noisy normalized actions into the token
/// width, add sinusoidal positions over the horizon, run the modulated
/// blocks against encoded observations, and map back to action space through
/// a final norm and a two-layer head.
template <typename T>
class DitDecoder {
public:
    DitDecoder(const ModelDims& d, long action_dim, Rng& rng, ParamSet<T>& ps,
               CrossScope scope = CrossScope::Aligned)
        : in_proj(action_dim, d.embed, rng, ps, "dec.in"),
          t_embed(d.embed, rng, ps, "dec.temb"),
          final_norm(d.embed, ps, "dec.n_f"),
          head_in(d.embed, d.embed, rng, ps, "dec.head_in"),
          head_out(d.embed, action_dim, rng, ps, "dec.head_out"),
          dims_(d),
          action_dim_(action_dim),
          scope_(scope) {
        if (action_dim < 1) throw shape_error("decoder needs action_dim >= 1");
        for (long i = 0; i < d.dec_depth; ++i) blocks_.emplace_back(d, rng, ps, "dec.b" + std::to_string(i));
    }

    /// actions (B,n,D), one diffusion step per sample, obs (B,h*S,E) -> (B,n,D).
    Tensor<T> predict_noise(const Tensor<T>& actions, const std::vector<long>& ks, const Tensor<T>& obs,
                            long h, long S) const {
        if (actions.rank() != 3 || actions.dim(2) != action_dim_)
            throw shape_error("predict_noise: actions must be (B,n," + std::to_string(action_dim_) + ")");
        const long B = actions.dim(0), n = actions.dim(1);
        if (static_cast<long>(ks.size()) != B) throw alignment_error("predict_noise: one step per sample");
        if (obs.rank() != 3 || obs.dim(0) != B || obs.dim(1) != h * S || obs.dim(2) != dims_.embed)
            throw alignment_error("predict_noise: obs tokens must be (B,h*S,E)");

        auto x = add(in_proj(actions), tile_const(sinusoid_table<T>(n, dims_.embed), B));
        auto temb = t_embed(ks);
        const BoolMat mask =
            scope_ == CrossScope::Aligned ? aligned_cross_mask(n, h, S) : full_mask(n, h * S);
        for (const auto& b : blocks_) x = b(x, obs, temb, mask);
        return head_out(gelu(head_in(final_norm(x))));
    }

    long cross_entry_count(long n, long h, long S) const {
        const BoolMat m = scope_ == CrossScope::Aligned ? aligned_cross_mask(n, h, S) : full_mask(n, h * S);
        return m.count_allowed();
    }

    const DecoderBlock<T>& block(long i) const { return blocks_.at(static_cast<size_t>(i)); }
    long depth() const { return static_cast<long>(blocks_.size()); }
    long action_dim() const { return action_dim_; }
    CrossScope scope() const { return scope_; }

    LinearLayer<T> in_proj;
    TimestepEmbed<T> t_embed;
    RmsNormLayer<T> final_norm;
    LinearLayer<T> head_in, head_out;

private:
    ModelDims dims_;
    long action_dim_;
    CrossScope scope_;
    std::vector<DecoderBlock<T>> blocks_;
};

}  // namespace xpolicy
