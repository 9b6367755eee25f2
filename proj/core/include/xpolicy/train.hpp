#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "xpolicy/optim.hpp"
#include "xpolicy/policy.hpp"

namespace xpolicy {

/// Episode held in memory with views packed to 8 bits per channel. Renders
/// are already quantized to k/255, so packing and unpacking are exact.
struct TrainEpisode {
    const SynthEmbodiment* emb = nullptr;
    Task task = Task::Reach;
    std::vector<long> prompt;                  // token ids
    std::vector<std::vector<double>> states;   // compact rows, one per timestep
    std::vector<std::vector<double>> actions;  // compact rows, one per transition
    long cameras = 0;
    long resolution = 0;
    std::vector<uint8_t> pixels;  // [state row][camera][3 * res * res]

    Image view(long row, long cam) const {
        const size_t plane = static_cast<size_t>(3 * resolution * resolution);
        const size_t base = (static_cast<size_t>(row) * static_cast<size_t>(cameras) + static_cast<size_t>(cam)) * plane;
        if (base + plane > pixels.size()) throw layout_error("view: row/camera out of range");
        Image img(resolution);
        for (size_t i = 0; i < plane; ++i) img.px[i] = static_cast<double>(pixels[base + i]) / 255.0;
        return img;
    }
};

inline TrainEpisode pack_episode(const Episode& ep) {
    TrainEpisode out;
    out.emb = &synth_embodiment(ep.embodiment_id);
    out.task = ep.task;
    out.prompt = tokenize_prompt(task_prompts(ep.task)[static_cast<size_t>(ep.prompt_variant)]);
    out.states = ep.states;
    out.actions = ep.actions;
    out.cameras = static_cast<long>(ep.views.empty() ? 0 : ep.views[0].size());
    out.resolution = ep.views.empty() || ep.views[0].empty() ? 0 : ep.views[0][0].size;
    const size_t plane = static_cast<size_t>(3 * out.resolution * out.resolution);
    out.pixels.reserve(ep.views.size() * static_cast<size_t>(out.cameras) * plane);
    for (const auto& row : ep.views)
        for (const Image& img : row)
            for (double px : img.px)
                out.pixels.push_back(static_cast<uint8_t>(std::lround(std::clamp(px, 0.0, 1.0) * 255.0)));
    return out;
}

/// A dataset directory loaded into memory, grouped by (embodiment, prompt
/// token length) so every sampled batch is shape-uniform.
class TrainingData {
public:
    struct Group {
        const SynthEmbodiment* emb = nullptr;
        long prompt_len = 0;
        std::vector<size_t> episodes;  // indices into episodes()
    };

    static TrainingData load(const std::filesystem::path& dir) {
        TrainingData data;
        const DatasetManifest manifest = load_manifest(dir);
        data.stats_ = ScalingStore::load(dataset_stats_path(dir));
        data.episodes_.reserve(manifest.files.size());
        for (const auto& file : manifest.files) data.episodes_.push_back(pack_episode(load_episode(dir / file)));
        for (size_t i = 0; i < data.episodes_.size(); ++i) {
            const TrainEpisode& ep = data.episodes_[i];
            const long len = static_cast<long>(ep.prompt.size());
            auto it = std::find_if(data.groups_.begin(), data.groups_.end(),
                                   [&](const Group& g) { return g.emb == ep.emb && g.prompt_len == len; });
            if (it == data.groups_.end()) {
                data.groups_.push_back(Group{ep.emb, len, {}});
                it = data.groups_.end() - 1;
            }
            it->episodes.push_back(i);
        }
        return data;
    }

    const ScalingStore& stats() const { return stats_; }
    const std::vector<TrainEpisode>& episodes() const { return episodes_; }
    const std::vector<Group>& groups() const { return groups_; }

private:
    ScalingStore stats_;
    std::vector<TrainEpisode> episodes_;
    std::vector<Group> groups_;
};

template <typename T>
struct TrainBatch {
    const SynthEmbodiment* emb = nullptr;
    std::vector<SampleObs> obs;
    Tensor<T> actions;  // (B, n, kDim) normalized canonical rows
};

/// Draws one shape-uniform batch: a group weighted by episode count, then
/// (episode, start timestep) per sample. Observation windows replicate the
/// first state backward in time; action chunks repeat the last transition.
template <typename T>
TrainBatch<T> sample_batch(const TrainingData& data, const DiffusionPolicy<T>& policy, long batch, Rng& rng) {
    if (data.groups().empty()) throw layout_error("sample_batch: empty dataset");
    if (batch <= 0) throw layout_error("sample_batch: batch must be positive");
    size_t total = 0;
    for (const auto& g : data.groups()) total += g.episodes.size();
    size_t r = rng.below(static_cast<uint64_t>(total));
    const TrainingData::Group* group = &data.groups().back();
    for (const auto& g : data.groups()) {
        if (r < g.episodes.size()) {
            group = &g;
            break;
        }
        r -= g.episodes.size();
    }

    const long h = policy.config().dims.obs_horizon;
    const long n = policy.config().dims.action_horizon;
    TrainBatch<T> out;
    out.emb = group->emb;
    out.obs.reserve(static_cast<size_t>(batch));
    std::vector<T> act_data;
    act_data.reserve(static_cast<size_t>(batch * n * canon::kDim));
    for (long b = 0; b < batch; ++b) {
        const size_t pick = static_cast<size_t>(rng.pick(static_cast<long>(group->episodes.size())));
        const TrainEpisode& ep = data.episodes()[group->episodes[pick]];
        const long steps = static_cast<long>(ep.actions.size());
        const long t = rng.pick(steps);
        SampleObs so;
        so.prompt = ep.prompt;
        for (long dt = h - 1; dt >= 0; --dt) {
            const long row = std::max<long>(0, t - dt);
            std::vector<Image> frame;
            frame.reserve(static_cast<size_t>(ep.cameras));
            for (long c = 0; c < ep.cameras; ++c) frame.push_back(ep.view(row, c));
            so.views.push_back(std::move(frame));
            so.proprio.push_back(policy.normalize_state(ep.states[static_cast<size_t>(row)], group->emb->desc));
        }
        out.obs.push_back(std::move(so));
        for (long j = 0; j < n; ++j) {
            const long row = std::min(t + j, steps - 1);
            const CanonicalState a =
                policy.normalize_action(ep.actions[static_cast<size_t>(row)], group->emb->desc);
            for (double v : a.values) act_data.push_back(static_cast<T>(v));
        }
    }
    out.actions = Tensor<T>::from({batch, n, canon::kDim}, std::move(act_data));
    return out;
}

struct TrainOptions {
    long steps = 4000;
    long batch = 32;
    long global_batch = 32;  // batch * accumulation factor
    double lr = 1e-4;
    long warmup = 500;
    double weight_decay = 0.0;
    double clip_norm = 0.0;  // <= 0 disables
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool use_ema = true;
    double ema_decay = 0.9999;
    uint64_t seed = 0;

    static TrainOptions from_config(const Config& c) {
        TrainOptions o;
        o.steps = c.integer("train steps");
        o.batch = c.integer("Batch size");
        o.global_batch = c.integer("Global batch size");
        o.lr = c.real("Learning rate");
        o.warmup = c.integer("Warmup steps");
        o.weight_decay = c.real("Weight decay");
        const std::string clip = c.str("Gradient clipping");
        o.clip_norm = clip == "none" ? 0.0 : c.real("Gradient clipping");
        o.beta1 = c.real("optimizer beta1");
        o.beta2 = c.real("optimizer beta2");
        o.adam_eps = c.real("optimizer eps");
        o.use_ema = c.flag("EMA");
        o.ema_decay = c.real("ema decay");
        if (c.str("Optimizer") != "adamw")
            throw io_error("config key 'Optimizer': only 'adamw' is implemented");
        if (c.real("Dropout") != 0.0) throw io_error("config key 'Dropout': only 0.0 is implemented");
        if (c.str("Precision") != "f32" && c.str("Precision") != "f64")
            throw io_error("config key 'Precision': expected f32 or f64");
        return o;
    }
};

struct StepMetrics {
    long step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    double seconds = 0.0;
};

/// Optimization loop: micro-batches accumulated onto one tape, warmup
/// schedule, optional global-norm clipping, decoupled-decay updates, and a
/// shadow average refreshed every step. Named data and noise streams make
/// runs reproducible; a non-finite loss raises training_error mid-step.
template <typename T>
class Trainer {
public:
    Trainer(DiffusionPolicy<T>& policy, const TrainingData& data, const TrainOptions& opt)
        : policy_(&policy),
          data_(&data),
          opt_(opt),
          adam_(policy.params()),
          ema_(policy.params(), opt.ema_decay),
          data_rng_(opt.seed, "train-data"),
          noise_rng_(opt.seed, "train-noise") {
        if (opt.batch <= 0 || opt.global_batch <= 0 || opt.global_batch % opt.batch != 0)
            throw layout_error("trainer: global batch " + std::to_string(opt.global_batch) +
                               " must be a positive multiple of batch " + std::to_string(opt.batch));
        adam_.beta1 = opt.beta1;
        adam_.beta2 = opt.beta2;
        adam_.eps = opt.adam_eps;
        adam_.weight_decay = opt.weight_decay;
    }

    StepMetrics step() {
        const auto t0 = std::chrono::steady_clock::now();
        const long micros = opt_.global_batch / opt_.batch;
        Tape<T> acc;
        double loss_sum = 0.0;
        for (long mb = 0; mb < micros; ++mb) {
            Tape<T> tape;
            typename Tape<T>::Scope scope(tape);
            const TrainBatch<T> batch = sample_batch(*data_, *policy_, opt_.batch, data_rng_);
            const Tensor<T> loss = policy_->loss(batch.obs, batch.actions, batch.emb->desc, noise_rng_);
            tape.backward(loss);
            loss_sum += static_cast<double>(loss.item());
            const T scale = T(1) / static_cast<T>(micros);
            for (const auto& [name, p] : policy_->params().items) {
                const std::vector<T>* g = tape.grad(p);
                if (!g) continue;
                std::vector<T>& a = acc.grad_buf(p.node());
                for (size_t i = 0; i < a.size(); ++i) a[i] += (*g)[i] * scale;
            }
        }
        StepMetrics m;
        m.lr = warmup_lr(opt_.lr, adam_.steps_done() + 1, opt_.warmup);
        m.grad_norm = clip_global_norm(acc, policy_->params(), opt_.clip_norm);
        adam_.step(acc, policy_->params(), m.lr);
        if (opt_.use_ema) ema_.update(policy_->params());
        m.step = adam_.steps_done();
        m.loss = loss_sum / static_cast<double>(micros);
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return m;
    }

    void run(long steps, const std::function<void(const StepMetrics&)>& on_step = {}) {
        for (long i = 0; i < steps; ++i) {
            const StepMetrics m = step();
            if (on_step) on_step(m);
        }
    }

    long steps_done() const { return adam_.steps_done(); }
    DiffusionPolicy<T>& policy() { return *policy_; }
    const TrainOptions& options() const { return opt_; }
    AdamW<T>& optimizer() { return adam_; }
    Ema<T>& ema() { return ema_; }
    Rng& data_rng() { return data_rng_; }
    Rng& noise_rng() { return noise_rng_; }

private:
    DiffusionPolicy<T>* policy_;
    const TrainingData* data_;
    TrainOptions opt_;
    AdamW<T> adam_;
    Ema<T> ema_;
    Rng data_rng_;
    Rng noise_rng_;
};

}  // namespace xpolicy
