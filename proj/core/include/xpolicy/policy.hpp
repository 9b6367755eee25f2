#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "xpolicy/arm.hpp"
#include "xpolicy/config.hpp"
#include "xpolicy/decoder.hpp"
#include "xpolicy/diffusion.hpp"
#include "xpolicy/encoder.hpp"
#include "xpolicy/harness.hpp"
#include "xpolicy/prompts.hpp"
#include "xpolicy/scaling.hpp"
#include "xpolicy/tokenizer.hpp"

namespace xpolicy {

struct PolicyConfig {
    ModelDims dims;
    long diffusion_steps = 1000;
    long sample_steps = 7;
    double clip_delta = 0.05;
    uint64_t model_seed = 1;
    uint64_t frozen_seed = 7;
    long image_size = 48;
    CrossScope scope = CrossScope::Aligned;

    static PolicyConfig from_config(const Config& c) {
        PolicyConfig p;
        p.dims = ModelDims::from_config(c);
        p.diffusion_steps = c.integer("diffusion steps");
        p.sample_steps = c.integer("sample steps");
        p.clip_delta = c.real("x0 clip delta");
        p.model_seed = static_cast<uint64_t>(c.integer("model seed"));
        p.frozen_seed = static_cast<uint64_t>(c.integer("frozen encoder seed"));
        p.image_size = c.integer("image size");
        p.scope = cross_scope_from(c.str("cross attn scope"));
        return p;
    }
};

/// End-to-end diffusion policy over the canonical state/action layout:
/// frozen perception stubs -> trainable tokenizer -> factorized observation
/// encoder -> modulated denoising decoder. Actions live as normalized
/// canonical rows; inactive slots carry zero targets so one decoder serves
/// every embodiment.
template <typename T>
class DiffusionPolicy {
public:
    DiffusionPolicy(const PolicyConfig& cfg, ScalingStore stats)
        : cfg_(cfg),
          stats_(std::move(stats)),
          vision_(cfg.frozen_seed, cfg.dims.patch_grid, cfg.dims.vision_feat, cfg.image_size),
          language_(cfg.frozen_seed + 1, static_cast<long>(prompt_vocabulary().size()), cfg.dims.lang_feat),
          init_rng_(cfg.model_seed, "model-init"),
          tokenizer_(cfg.dims, &vision_, &language_, init_rng_, params_),
          encoder_(cfg.dims, init_rng_, params_),
          decoder_(cfg.dims, canon::kDim, init_rng_, params_, cfg.scope),
          schedule_(DiffusionSchedule::cosine(cfg.diffusion_steps)) {}

    DiffusionPolicy(const DiffusionPolicy&) = delete;
    DiffusionPolicy& operator=(const DiffusionPolicy&) = delete;

    const PolicyConfig& config() const { return cfg_; }
    const ScalingStore& stats() const { return stats_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    const DiffusionSchedule& schedule() const { return schedule_; }
    const Tokenizer<T>& tokenizer() const { return tokenizer_; }
    const JstEncoder<T>& encoder() const { return encoder_; }
    const DitDecoder<T>& decoder() const { return decoder_; }

    CanonicalState normalize_state(const std::vector<double>& row, const EmbodimentDescriptor& emb) const {
        return normalize_masked(row, emb.id, emb.active_slots, stats_);
    }

    CanonicalState normalize_action(const std::vector<double>& row, const EmbodimentDescriptor& emb) const {
        return normalize_masked(row, action_stats_id(emb.id), emb.action_active_slots, stats_);
    }

    std::vector<double> denormalize_action(const CanonicalState& state, const EmbodimentDescriptor& emb) const {
        return denormalize_masked(state, action_stats_id(emb.id), emb.action_active_slots, stats_);
    }

    /// Denoising loss for one shape-uniform batch. actions is (B, n, kDim)
    /// of normalized canonical rows. Differentiable through all trainable
    /// parameters when a tape scope is active.
    Tensor<T> loss(const std::vector<SampleObs>& samples, const Tensor<T>& actions,
                   const EmbodimentDescriptor& emb, Rng& noise_rng) const {
        const long B = static_cast<long>(samples.size());
        if (actions.rank() != 3 || actions.dim(0) != B || actions.dim(1) != cfg_.dims.action_horizon ||
            actions.dim(2) != canon::kDim)
            throw shape_error("loss: actions must be (" + std::to_string(B) + "," +
                              std::to_string(cfg_.dims.action_horizon) + "," + std::to_string(canon::kDim) +
                              "), got " + shape_str(actions.shape()));
        const ObsBatch<T> batch = tokenizer_.assemble(samples, emb);
        const Tensor<T> obs = encoder_.encode(batch);
        return diffusion_loss(
            schedule_, actions,
            [&](const Tensor<T>& noisy, const std::vector<long>& ks) {
                return decoder_.predict_noise(noisy, ks, obs, batch.h, batch.S);
            },
            noise_rng);
    }

    /// One decision: encodes the observation window once, runs the
    /// deterministic sampler across that encoding, and returns action_horizon
    /// raw delta rows in the embodiment's compact action layout.
    std::vector<std::vector<double>> act(const SampleObs& sample, const EmbodimentDescriptor& emb,
                                         Rng& rng) const {
        const ObsBatch<T> batch = tokenizer_.assemble({sample}, emb);
        const Tensor<T> obs = encoder_.encode(batch);
        const Tensor<T> traj = deterministic_sample<T>(
            schedule_,
            [&](const Tensor<T>& noisy, const std::vector<long>& ks) {
                return decoder_.predict_noise(noisy, ks, obs, batch.h, batch.S);
            },
            Shape{1, cfg_.dims.action_horizon, canon::kDim}, cfg_.sample_steps, rng, cfg_.clip_delta);

        std::vector<std::vector<double>> rows;
        rows.reserve(static_cast<size_t>(cfg_.dims.action_horizon));
        for (long i = 0; i < cfg_.dims.action_horizon; ++i) {
            CanonicalState s;
            for (long d = 0; d < canon::kDim; ++d) {
                s.values[static_cast<size_t>(d)] =
                    static_cast<double>(traj.data()[static_cast<size_t>(i * canon::kDim + d)]);
                s.mask[static_cast<size_t>(d)] = emb.action_active_slots[static_cast<size_t>(d)];
            }
            rows.push_back(denormalize_action(s, emb));
        }
        return rows;
    }

private:
    PolicyConfig cfg_;
    ScalingStore stats_;
    StubVisionEncoder vision_;
    StubLanguageEncoder language_;
    Rng init_rng_;
    ParamSet<T> params_;
    Tokenizer<T> tokenizer_;
    JstEncoder<T> encoder_;
    DitDecoder<T> decoder_;
    DiffusionSchedule schedule_;
};

/// Wraps a policy as an evaluator callback. Normalizes the provided state
/// window, forwards the rendered views and tokenized prompt, and owns the
/// sampler noise stream so repeated evaluations reproduce bit-for-bit.
template <typename T>
RolloutPolicy rollout_adapter(const DiffusionPolicy<T>& policy, const SynthEmbodiment& emb, uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed, "policy-sample");
    const EmbodimentDescriptor desc = emb.desc;
    return [&policy, desc, rng](const RolloutContext& ctx) {
        SampleObs sample;
        sample.views = ctx.recent_views;
        sample.proprio.reserve(ctx.recent_states.size());
        for (const auto& row : ctx.recent_states) sample.proprio.push_back(policy.normalize_state(row, desc));
        sample.prompt = tokenize_prompt(ctx.prompt);
        return policy.act(sample, desc, *rng);
    };
}

}  // namespace xpolicy
