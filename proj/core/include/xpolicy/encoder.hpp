#pragma once

#include <atomic>

#include "xpolicy/attention.hpp"
#include "xpolicy/tokenizer.hpp"

namespace xpolicy {

/// Allowed score entries per block of the factorized observation encoder,
/// per sample and head: causal temporal, bidirectional intra-state,
/// two directed language-cross passes.
struct AttentionCounts {
    long temporal = 0;
    long state = 0;
    long language = 0;
    long total() const { return temporal + state + language; }
};

inline AttentionCounts factorized_entry_counts(long T, long S, long L) {
    AttentionCounts c;
    c.temporal = S * (T * (T + 1) / 2);
    c.state = T * S * S;
    c.language = 2 * T * S * L;
    return c;
}

inline long full_entry_count(long T, long S, long L) { return (T * S + L) * (T * S + L); }

/// Incremented whenever a block sees an empty language segment and passes
/// the cross sublayer through.
uint64_t empty_prompt_passthrough_count();
void reset_empty_prompt_passthrough_count();
namespace detail_counters {
extern std::atomic<uint64_t> g_empty_prompt;
}

/// One factorized block: pre-normed residual sublayers
/// temporal attention -> state attention -> language cross -> MLP.
template <typename T>
struct EncoderBlock {
    RmsNormLayer<T> n_t, n_s, n_xo, n_xl, n_lq, n_m;
    MultiheadAttention<T> a_t, a_s, a_ol, a_lo;
    LinearLayer<T> mlp_in, mlp_out;

    EncoderBlock(const ModelDims& d, Rng& rng, ParamSet<T>& ps, const std::string& name)
        : n_t(d.embed, ps, name + ".n_t"),
          n_s(d.embed, ps, name + ".n_s"),
          n_xo(d.embed, ps, name + ".n_xo"),
          n_xl(d.embed, ps, name + ".n_xl"),
          n_lq(d.embed, ps, name + ".n_lq"),
          n_m(d.embed, ps, name + ".n_m"),
          a_t(d.embed, d.heads, rng, ps, name + ".a_t"),
          a_s(d.embed, d.heads, rng, ps, name + ".a_s"),
          a_ol(d.embed, d.heads, rng, ps, name + ".a_ol"),
          a_lo(d.embed, d.heads, rng, ps, name + ".a_lo"),
          mlp_in(d.embed, d.embed * d.mlp_ratio, rng, ps, name + ".mlp_in"),
          mlp_out(d.embed * d.mlp_ratio, d.embed, rng, ps, name + ".mlp_out") {}

    /// Causal attention across time within each within-state position group.
    /// x: (B, steps*per_state, E).
    Tensor<T> temporal(const Tensor<T>& x, long steps, long per_state) const {
        const long B = x.dim(0), E = x.dim(2);
        if (x.dim(1) != steps * per_state) throw alignment_error("temporal attention: tokens != steps*per_state");
        auto grouped = reshape(transpose(reshape(x, {B, steps, per_state, E}), 1, 2), {B * per_state, steps, E});
        const BoolMat mask = causal_mask(steps);
        auto normed = n_t(grouped);
        auto out = a_t(normed, normed, &mask);
        return reshape(transpose(reshape(add(grouped, out), {B, per_state, steps, E}), 1, 2),
                       {B, steps * per_state, E});
    }

    /// Bidirectional attention within each timestep's tokens.
    Tensor<T> state(const Tensor<T>& x, long steps, long per_state) const {
        const long B = x.dim(0), E = x.dim(2);
        if (x.dim(1) != steps * per_state) throw alignment_error("state attention: tokens != steps*per_state");
        auto grouped = reshape(x, {B * steps, per_state, E});
        auto normed = n_s(grouped);
        auto out = a_s(normed, normed, nullptr);
        return reshape(add(grouped, out), {B, steps * per_state, E});
    }

    /// Paired directed passes; both sides read the other's pre-update tokens.
    /// Empty language segment passes through unchanged.
    std::pair<Tensor<T>, Tensor<T>> cross(const Tensor<T>& obs, const Tensor<T>& lang) const {
        if (lang.dim(1) == 0) {
            detail_counters::g_empty_prompt.fetch_add(1, std::memory_order_relaxed);
            return {obs, lang};
        }
        auto obs2 = add(obs, a_ol(n_xo(obs), n_xl(lang), nullptr));
        auto lang2 = add(lang, a_lo(n_lq(lang), n_xo(obs), nullptr));
        return {obs2, lang2};
    }

    Tensor<T> mlp(const Tensor<T>& x) const { return add(x, mlp_out(gelu(mlp_in(n_m(x))))); }
};

/// Flat baseline block: one bidirectional self-attention over the whole
/// concatenated (observation + language) sequence, then an MLP.
template <typename T>
struct FullBlock {
    RmsNormLayer<T> n_a, n_m;
    MultiheadAttention<T> attn;
    LinearLayer<T> mlp_in, mlp_out;

    FullBlock(const ModelDims& d, Rng& rng, ParamSet<T>& ps, const std::string& name)
        : n_a(d.embed, ps, name + ".n_a"),
          n_m(d.embed, ps, name + ".n_m"),
          attn(d.embed, d.heads, rng, ps, name + ".attn"),
          mlp_in(d.embed, d.embed * d.mlp_ratio, rng, ps, name + ".mlp_in"),
          mlp_out(d.embed * d.mlp_ratio, d.embed, rng, ps, name + ".mlp_out") {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto normed = n_a(x);
        auto h = add(x, attn(normed, normed, nullptr));
        return add(h, mlp_out(gelu(mlp_in(n_m(h)))));
    }
};

enum class EncoderMode { Factorized, Full };

/// Joint observation encoder. Factorized mode runs the three masked
/// sublayers per block; Full mode is the quadratic baseline used for
/// complexity benchmarking. Output keeps only the observation tokens.
template <typename T>
class JstEncoder {
public:
    JstEncoder(const ModelDims& d, Rng& rng, ParamSet<T>& ps, EncoderMode mode = EncoderMode::Factorized)
        : dims_(d), mode_(mode) {
        for (long i = 0; i < d.enc_depth; ++i) {
            const std::string name = "enc.b" + std::to_string(i);
            if (mode == EncoderMode::Factorized)
                blocks_.emplace_back(d, rng, ps, name);
            else
                full_blocks_.emplace_back(d, rng, ps, name);
        }
    }

    /// obs (B, T*S, E), lang (B, L, E) -> encoded (obs, lang) of the same
    /// shapes. Downstream conditioning consumes only the observation side;
    /// the language side is exposed so every sublayer stays reachable.
    std::pair<Tensor<T>, Tensor<T>> encode_with_language(const ObsBatch<T>& batch) const {
        const long steps = batch.h, per_state = batch.S, obs_len = steps * per_state;
        if (batch.obs.rank() != 3 || batch.obs.dim(1) != obs_len)
            throw alignment_error("encode: observation tokens are not h*S per sample");
        if (mode_ == EncoderMode::Full) {
            auto x = batch.L > 0 ? concat(std::vector{batch.obs, batch.lang}, 1) : batch.obs;
            for (const auto& b : full_blocks_) x = b(x);
            if (batch.L == 0) return {x, batch.lang};
            return {slice(x, 1, 0, obs_len), slice(x, 1, obs_len, batch.L)};
        }
        Tensor<T> obs = batch.obs;
        Tensor<T> lang = batch.lang;
        for (const auto& b : blocks_) {
            obs = b.temporal(obs, steps, per_state);
            obs = b.state(obs, steps, per_state);
            auto [o2, l2] = b.cross(obs, lang);
            obs = b.mlp(o2);
            lang = l2;
        }
        return {obs, lang};
    }

    /// Encoded observation tokens only (what the action decoder reads).
    Tensor<T> encode(const ObsBatch<T>& batch) const { return encode_with_language(batch).first; }

    /// Allowed-entry counts measured from the actual masks and group
    /// multiplicities used in the forward pass (per block, per head).
    AttentionCounts measured_entry_counts(long steps, long per_state, long lang_len) const {
        AttentionCounts c;
        c.temporal = per_state * causal_mask(steps).count_allowed();
        c.state = steps * full_mask(per_state, per_state).count_allowed();
        c.language = 2 * steps * per_state * lang_len;  // obs->lang then lang->obs, unmasked
        return c;
    }

    const EncoderBlock<T>& block(long i) const { return blocks_.at(static_cast<size_t>(i)); }
    long depth() const { return static_cast<long>(blocks_.size() + full_blocks_.size()); }
    EncoderMode mode() const { return mode_; }

private:
    ModelDims dims_;
    EncoderMode mode_;
    std::vector<EncoderBlock<T>> blocks_;
    std::vector<FullBlock<T>> full_blocks_;
};

}  // namespace xpolicy
