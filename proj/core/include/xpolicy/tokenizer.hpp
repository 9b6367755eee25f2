#pragma once

#include <vector>

#include "xpolicy/canonical.hpp"
#include "xpolicy/config.hpp"
#include "xpolicy/image.hpp"
#include "xpolicy/nn.hpp"
#include "xpolicy/stub_encoders.hpp"
#include "xpolicy/tensor.hpp"

namespace xpolicy {

struct ModelDims {
    long embed = 64;          // E
    long patch_grid = 4;      // P
    long vision_feat = 48;    // F
    long lang_feat = 32;      // F_L
    long heads = 4;
    long enc_depth = 4;
    long dec_depth = 4;
    long mlp_ratio = 4;
    long obs_horizon = 2;     // h
    long action_horizon = 16; // n
    long exec_horizon = 8;    // m

    static ModelDims from_config(const Config& c) {
        ModelDims d;
        d.embed = c.integer("embed dim");
        d.patch_grid = c.integer("patch grid");
        d.vision_feat = c.integer("vision feature dim");
        d.lang_feat = c.integer("language feature dim");
        d.heads = c.integer("heads");
        d.enc_depth = c.integer("encoder depth");
        d.dec_depth = c.integer("decoder depth");
        d.mlp_ratio = c.integer("mlp ratio");
        d.obs_horizon = c.integer("obs horizon");
        d.action_horizon = c.integer("action horizon");
        d.exec_horizon = c.integer("exec horizon");
        if (d.embed % d.heads != 0) throw layout_error("embed dim must divide evenly into heads");
        if (d.embed % 2 != 0) throw layout_error("embed dim must be even for sinusoidal positions");
        return d;
    }
};

enum class Modality { Rgb, Boundary, Proprio, Language };

struct TokenCoord {
    long t;             // timestep; -1 for language
    Modality modality;
    long pos;           // within-state index, or prompt index for language
};

/// One sample's raw observation window.
struct SampleObs {
    std::vector<std::vector<Image>> views;   // h timesteps x camera_count images
    std::vector<CanonicalState> proprio;     // h states
    std::vector<long> prompt;                // token ids
};

/// A shape-uniform batch of embedded observations.
template <typename T>
struct ObsBatch {
    Tensor<T> obs;   // (B, h*S, E)
    Tensor<T> lang;  // (B, L, E)
    long h = 0, S = 0, L = 0;
};

/// Single-sample view with per-token coordinates, for inspection and tests.
template <typename T>
struct TokenSequence {
    Tensor<T> obs;
    Tensor<T> lang;
    std::vector<TokenCoord> coords;  // observation tokens then language tokens
    long per_state = 0;
};

/// Embeds camera views, proprioception, and prompt into one aligned token
/// sequence: per timestep [rgb patches | boundary token | proprio token],
/// language appended as its own segment. No padding anywhere.
template <typename T>
class Tokenizer {
public:
    Tokenizer(const ModelDims& dims, const StubVisionEncoder* vision, const StubLanguageEncoder* language, Rng& rng,
              ParamSet<T>& ps)
        : dims_(dims),
          vision_(vision),
          language_(language),
          vis_proj_(dims.vision_feat, dims.embed * 2, dims.embed, rng, ps, "tok.vis"),
          lang_proj_(dims.lang_feat, dims.embed * 2, dims.embed, rng, ps, "tok.lang"),
          prop_proj_(2 * canon::kDim, dims.embed * 2, dims.embed, rng, ps, "tok.prop"),
          modality_token_(ps.add("tok.boundary", init::normal<T>({dims.embed}, rng, 0.02))) {}

    long state_tokens(const EmbodimentDescriptor& emb) const {
        return emb.camera_count * vision_->patch_count() + 2;
    }

    /// Token coordinates for one sample of this embodiment and prompt length.
    std::vector<TokenCoord> coords(const EmbodimentDescriptor& emb, long prompt_len) const {
        const long S = state_tokens(emb);
        const long rgb = emb.camera_count * vision_->patch_count();
        std::vector<TokenCoord> out;
        for (long t = 0; t < dims_.obs_horizon; ++t)
            for (long p = 0; p < S; ++p)
                out.push_back({t, p < rgb ? Modality::Rgb : (p == rgb ? Modality::Boundary : Modality::Proprio), p});
        for (long i = 0; i < prompt_len; ++i) out.push_back({-1, Modality::Language, i});
        return out;
    }

    ObsBatch<T> assemble(const std::vector<SampleObs>& samples, const EmbodimentDescriptor& emb) const {
        if (samples.empty()) throw layout_error("assemble: empty batch");
        const long B = static_cast<long>(samples.size());
        const long h = dims_.obs_horizon;
        const long cams = emb.camera_count;
        const long P2 = vision_->patch_count();
        const long F = vision_->feature_dim();
        const long L = static_cast<long>(samples[0].prompt.size());
        const long S = state_tokens(emb);
        const long E = dims_.embed;

        for (const auto& s : samples) {
            if (static_cast<long>(s.views.size()) != h || static_cast<long>(s.proprio.size()) != h)
                throw layout_error("assemble: sample horizon != " + std::to_string(h));
            for (const auto& v : s.views)
                if (static_cast<long>(v.size()) != cams)
                    throw layout_error("assemble: camera count " + std::to_string(v.size()) + " != descriptor's " +
                                       std::to_string(cams));
            if (static_cast<long>(s.prompt.size()) != L)
                throw layout_error("assemble: mixed prompt lengths in one batch");
        }

        // frozen features, stacked across the batch
        std::vector<T> vis_feat;
        vis_feat.reserve(static_cast<size_t>(B * h * cams * P2 * F));
        std::vector<T> prop_feat;
        prop_feat.reserve(static_cast<size_t>(B * h * 2 * canon::kDim));
        std::vector<T> lang_feat;
        lang_feat.reserve(static_cast<size_t>(B * L * dims_.lang_feat));
        for (const auto& s : samples) {
            for (long t = 0; t < h; ++t) {
                for (long c = 0; c < cams; ++c) {
                    const auto f = vision_->encode(s.views[static_cast<size_t>(t)][static_cast<size_t>(c)]);
                    for (double v : f) vis_feat.push_back(static_cast<T>(v));
                }
                const CanonicalState& cs = s.proprio[static_cast<size_t>(t)];
                for (double v : cs.values) prop_feat.push_back(static_cast<T>(v));
                for (uint8_t m : cs.mask) prop_feat.push_back(static_cast<T>(m));
            }
            const auto lf = language_->encode(s.prompt);
            for (double v : lf) lang_feat.push_back(static_cast<T>(v));
        }

        auto vis_tok = vis_proj_(Tensor<T>::from({B * h * cams * P2, F}, std::move(vis_feat)));
        auto prop_tok = prop_proj_(Tensor<T>::from({B * h, 2 * canon::kDim}, std::move(prop_feat)));
        auto lang_tok = lang_proj_(Tensor<T>::from({B * L, dims_.lang_feat}, std::move(lang_feat)));

        auto rgb_block = reshape(vis_tok, {B, h, cams * P2, E});
        auto bound_block = reshape(bias_add(Tensor<T>::zeros({B * h, 1, E}), modality_token_), {B, h, 1, E});
        auto prop_block = reshape(prop_tok, {B, h, 1, E});
        auto obs = reshape(concat(std::vector{rgb_block, bound_block, prop_block}, 2), {B, h * S, E});

        // additive positions: timestep index + within-state index
        std::vector<T> pos;
        pos.reserve(static_cast<size_t>(h * S * E));
        for (long t = 0; t < h; ++t)
            for (long p = 0; p < S; ++p) {
                const auto tp = sinusoid_row<T>(static_cast<double>(t), E);
                const auto sp = sinusoid_row<T>(static_cast<double>(p), E);
                for (long e = 0; e < E; ++e) pos.push_back(tp[static_cast<size_t>(e)] + sp[static_cast<size_t>(e)]);
            }
        obs = add(obs, tile_const(Tensor<T>::from({h * S, E}, std::move(pos)), B));

        auto lang = add(reshape(lang_tok, {B, L, E}), tile_const(sinusoid_table<T>(L, E), B));

        ObsBatch<T> out;
        out.obs = obs;
        out.lang = lang;
        out.h = h;
        out.S = S;
        out.L = L;
        return out;
    }

    TokenSequence<T> assemble_one(const SampleObs& sample, const EmbodimentDescriptor& emb) const {
        auto batch = assemble({sample}, emb);
        TokenSequence<T> seq;
        seq.obs = reshape(batch.obs, {batch.h * batch.S, dims_.embed});
        seq.lang = reshape(batch.lang, {batch.L, dims_.embed});
        seq.coords = coords(emb, batch.L);
        seq.per_state = batch.S;
        return seq;
    }

    const ModelDims& dims() const { return dims_; }

private:
    ModelDims dims_;
    const StubVisionEncoder* vision_;
    const StubLanguageEncoder* language_;
    Projector<T> vis_proj_, lang_proj_, prop_proj_;
    Tensor<T> modality_token_;
};

}  // namespace xpolicy
