#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "xpolicy/checkpoint.hpp"
#include "xpolicy/train.hpp"

using namespace xpolicy;

namespace {

std::filesystem::path temp_dir(const char* stem) {
    auto p = std::filesystem::temp_directory_path() / (std::string(stem) + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    return p;
}

Config tiny_config() {
    Config c = Config::defaults();
    c.set_integer("embed dim", 16);
    c.set_integer("patch grid", 2);
    c.set_integer("vision feature dim", 8);
    c.set_integer("language feature dim", 8);
    c.set_integer("heads", 2);
    c.set_integer("encoder depth", 1);
    c.set_integer("decoder depth", 1);
    c.set_integer("mlp ratio", 2);
    c.set_integer("action horizon", 4);
    c.set_integer("exec horizon", 2);
    c.set_integer("diffusion steps", 50);
    c.set_integer("sample steps", 4);
    c.set_integer("model seed", 11);
    c.set_integer("frozen encoder seed", 13);
    return c;
}

const TrainingData& reach_data() {
    static const TrainingData data = [] {
        const auto dir = temp_dir("xpolicy-train-reach");
        build_dataset(dir, {"duo2"}, {Task::Reach}, 3, 2024);
        return TrainingData::load(dir);
    }();
    return data;
}

bool same_params(const ParamSet<float>& a, const ParamSet<float>& b) {
    if (a.items.size() != b.items.size()) return false;
    for (size_t i = 0; i < a.items.size(); ++i) {
        if (a.items[i].first != b.items[i].first) return false;
        const auto& x = a.items[i].second.data();
        const auto& y = b.items[i].second.data();
        if (x.size() != y.size()) return false;
        if (std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("learning-rate warmup follows the closed form") {
    CHECK(warmup_lr(1e-4, 250, 500) == doctest::Approx(0.5e-4).epsilon(1e-12));
    CHECK(warmup_lr(1e-4, 500, 500) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(warmup_lr(1e-4, 700, 500) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(warmup_lr(1e-4, 1, 500) == doctest::Approx(2e-7).epsilon(1e-12));
    CHECK(warmup_lr(3.0, 10, 0) == doctest::Approx(3.0));
    CHECK_THROWS_AS(warmup_lr(1e-4, 0, 500), training_error);
}

TEST_CASE("adamw matches hand-computed updates and decays idle moments") {
    ParamSet<double> ps;
    auto p = ps.add("p", Tensor<double>::from({2}, {1.0, 1.0}));
    auto q = ps.add("q", Tensor<double>::from({1}, {2.0}));
    AdamW<double> opt(ps);

    Tape<double> tape;
    tape.grad_buf(p.node()) = {1.0, -1.0};
    opt.step(tape, ps, 0.1);
    // m=0.1g, v=0.001g^2, bias-corrected to g exactly: p -= lr*g/(|g|+eps)
    const double step1 = 0.1 * (1.0 / (1.0 + 1e-8));
    CHECK(p.data()[0] == doctest::Approx(1.0 - step1).epsilon(1e-14));
    CHECK(p.data()[1] == doctest::Approx(1.0 + step1).epsilon(1e-14));
    CHECK(q.data()[0] == 2.0);  // no gradient, no decay: untouched
    CHECK(opt.steps_done() == 1);

    // Reference loop in plain doubles for three more noisy steps.
    double m = 0.1, v = 0.001, ref = p.data()[0];
    const double grads[3] = {0.5, -0.25, 2.0};
    for (int t = 0; t < 3; ++t) {
        Tape<double> tp;
        tp.grad_buf(p.node()) = {grads[t], 0.0};
        opt.step(tp, ps, 0.1);
        m = 0.9 * m + 0.1 * grads[t];
        v = 0.999 * v + 0.001 * grads[t] * grads[t];
        const double bc1 = 1.0 - std::pow(0.9, t + 2.0);
        const double bc2 = 1.0 - std::pow(0.999, t + 2.0);
        ref -= 0.1 * ((m / bc1) / (std::sqrt(v / bc2) + 1e-8));
        CHECK(p.data()[0] == doctest::Approx(ref).epsilon(1e-12));
    }
    CHECK(opt.steps_done() == 4);

    // Decoupled decay shrinks the weight even at zero gradient.
    AdamW<double> wd(ps);
    wd.weight_decay = 0.01;
    Tape<double> tp;
    tp.grad_buf(q.node()) = {0.0};
    const double before = q.data()[0];
    wd.step(tp, ps, 0.1);
    CHECK(q.data()[0] == doctest::Approx(before * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
}

TEST_CASE("global-norm clipping rescales exactly and reports the pre-clip norm") {
    ParamSet<double> ps;
    auto a = ps.add("a", Tensor<double>::from({1}, {0.0}));
    auto b = ps.add("b", Tensor<double>::from({1}, {0.0}));
    Tape<double> tape;
    tape.grad_buf(a.node()) = {3.0};
    tape.grad_buf(b.node()) = {4.0};
    CHECK(clip_global_norm(tape, ps, 10.0) == doctest::Approx(5.0));
    CHECK(tape.grad_buf(a.node())[0] == 3.0);
    CHECK(clip_global_norm(tape, ps, 0.0) == doctest::Approx(5.0));  // disabled
    CHECK(tape.grad_buf(b.node())[0] == 4.0);
    CHECK(clip_global_norm(tape, ps, 1.0) == doctest::Approx(5.0));
    CHECK(tape.grad_buf(a.node())[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(tape.grad_buf(b.node())[0] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("shadow average matches the analytic recurrence to 1e-12") {
    ParamSet<double> ps;
    auto p = ps.add("p", Tensor<double>::from({3}, {0.4, -1.2, 2.5}));
    const std::vector<double> p0 = p.data();
    const double mu = 0.9;
    Ema<double> ema(ps, mu);
    CHECK(ema.shadows()[0] == p0);

    Rng rng(7, "ema-test");
    std::vector<std::vector<double>> history;
    for (int k = 0; k < 12; ++k) {
        for (auto& v : p.data()) v += rng.uniform(-0.1, 0.1);
        history.push_back(p.data());
        ema.update(ps);
    }
    for (size_t j = 0; j < p0.size(); ++j) {
        double expect = std::pow(mu, 12.0) * p0[j];
        for (size_t k = 0; k < history.size(); ++k)
            expect += (1.0 - mu) * std::pow(mu, static_cast<double>(11 - k)) * history[k][j];
        CHECK(ema.shadows()[0][j] == doctest::Approx(expect).epsilon(1e-12));
    }

    ParamSet<double> other;
    other.add("x", Tensor<double>::from({1}, {0.0}));
    CHECK_THROWS_AS(ema.update(other), training_error);
    ema.apply(ps);
    CHECK(p.data() == ema.shadows()[0]);
}

TEST_CASE("config mapping: policy and trainer options read the standard keys") {
    const Config c = Config::defaults();
    const PolicyConfig pc = PolicyConfig::from_config(c);
    CHECK(pc.dims.embed == 64);
    CHECK(pc.dims.action_horizon == 16);
    CHECK(pc.diffusion_steps == 1000);
    CHECK(pc.sample_steps == 7);
    CHECK(pc.clip_delta == doctest::Approx(0.05));
    CHECK(pc.model_seed == 1);
    CHECK(pc.frozen_seed == 7);
    CHECK(pc.image_size == 48);
    CHECK(pc.scope == CrossScope::Aligned);

    const TrainOptions o = TrainOptions::from_config(c);
    CHECK(o.steps == 4000);
    CHECK(o.batch == 32);
    CHECK(o.global_batch == 32);
    CHECK(o.lr == doctest::Approx(1e-4));
    CHECK(o.warmup == 500);
    CHECK(o.weight_decay == 0.0);
    CHECK(o.clip_norm == 0.0);
    CHECK(o.beta1 == doctest::Approx(0.9));
    CHECK(o.beta2 == doctest::Approx(0.999));
    CHECK(o.use_ema);
    CHECK(o.ema_decay == doctest::Approx(0.9999));

    Config bad = Config::defaults();
    bad.set("Optimizer", "sgd");
    CHECK_THROWS_AS(TrainOptions::from_config(bad), io_error);
    bad = Config::defaults();
    bad.set("Dropout", "0.1");
    CHECK_THROWS_AS(TrainOptions::from_config(bad), io_error);
    bad = Config::defaults();
    bad.set("Gradient clipping", "1.5");
    CHECK(TrainOptions::from_config(bad).clip_norm == doctest::Approx(1.5));
}

TEST_CASE("policy construction is seed-deterministic") {
    const PolicyConfig pc = PolicyConfig::from_config(tiny_config());
    DiffusionPolicy<float> a(pc, reach_data().stats());
    DiffusionPolicy<float> b(pc, reach_data().stats());
    CHECK(a.params().total_size() > 0);
    CHECK(same_params(a.params(), b.params()));

    PolicyConfig other = pc;
    other.model_seed = 12;
    DiffusionPolicy<float> c(other, reach_data().stats());
    CHECK_FALSE(same_params(a.params(), c.params()));
}

TEST_CASE("dataset packing is lossless and groups are shape-uniform") {
    const auto dir = temp_dir("xpolicy-train-pack");
    const DatasetManifest manifest = build_dataset(dir, {"duo2", "duo3"}, {Task::Reach}, 2, 31);
    const TrainingData data = TrainingData::load(dir);
    REQUIRE(data.episodes().size() == manifest.files.size());

    for (size_t i = 0; i < manifest.files.size(); ++i) {
        const Episode raw = load_episode(dir / manifest.files[i]);
        const TrainEpisode& ep = data.episodes()[i];
        CHECK(ep.emb == &synth_embodiment(raw.embodiment_id));
        CHECK(ep.states == raw.states);
        CHECK(ep.actions == raw.actions);
        CHECK(ep.prompt == tokenize_prompt(task_prompts(raw.task)[static_cast<size_t>(raw.prompt_variant)]));
        CHECK(ep.cameras == static_cast<long>(raw.views[0].size()));
        CHECK(ep.resolution == raw.views[0][0].size);
        for (size_t row : {size_t(0), raw.views.size() - 1})
            for (size_t cam = 0; cam < raw.views[row].size(); ++cam) {
                const Image img = ep.view(static_cast<long>(row), static_cast<long>(cam));
                CHECK(img.px == raw.views[row][cam].px);  // quantized pixels survive u8 packing exactly
            }
        CHECK_THROWS_AS(ep.view(static_cast<long>(raw.views.size()), 0), layout_error);
    }

    size_t grouped = 0;
    for (const auto& g : data.groups()) {
        grouped += g.episodes.size();
        for (size_t idx : g.episodes) {
            CHECK(data.episodes()[idx].emb == g.emb);
            CHECK(static_cast<long>(data.episodes()[idx].prompt.size()) == g.prompt_len);
        }
    }
    CHECK(grouped == data.episodes().size());
}

TEST_CASE("batch sampling replays the documented draw sequence") {
    const auto dir = temp_dir("xpolicy-train-single");
    build_dataset(dir, {"duo2"}, {Task::Hold}, 1, 99);
    const TrainingData data = TrainingData::load(dir);
    REQUIRE(data.groups().size() == 1);
    const TrainEpisode& ep = data.episodes()[0];
    const EmbodimentDescriptor& desc = ep.emb->desc;

    const PolicyConfig pc = PolicyConfig::from_config(tiny_config());
    DiffusionPolicy<float> policy(pc, data.stats());
    const long h = pc.dims.obs_horizon, n = pc.dims.action_horizon;

    Rng rng(5, "batch-test");
    Rng replay = rng;
    const long B = 256;
    const TrainBatch<float> batch = sample_batch(data, policy, B, rng);
    REQUIRE(batch.emb == ep.emb);
    REQUIRE(static_cast<long>(batch.obs.size()) == B);
    REQUIRE((batch.actions.shape() == Shape{B, n, canon::kDim}));

    replay.below(1);  // group draw
    bool saw_start = false, saw_tail = false;
    for (long b = 0; b < B; ++b) {
        replay.pick(1);  // episode draw
        const long t = replay.pick(static_cast<long>(ep.actions.size()));
        saw_start |= t == 0;
        saw_tail |= t + n > static_cast<long>(ep.actions.size());
        const SampleObs& so = batch.obs[static_cast<size_t>(b)];
        REQUIRE(static_cast<long>(so.proprio.size()) == h);
        REQUIRE(static_cast<long>(so.views.size()) == h);
        CHECK(so.prompt == ep.prompt);
        for (long dt = h - 1, slot = 0; dt >= 0; --dt, ++slot) {
            const long row = std::max<long>(0, t - dt);
            const CanonicalState want = policy.normalize_state(ep.states[static_cast<size_t>(row)], desc);
            CHECK(so.proprio[static_cast<size_t>(slot)].values == want.values);
            CHECK(so.proprio[static_cast<size_t>(slot)].mask == want.mask);
            REQUIRE(static_cast<long>(so.views[static_cast<size_t>(slot)].size()) == ep.cameras);
            CHECK(so.views[static_cast<size_t>(slot)][0].px == ep.view(row, 0).px);
        }
        for (long j = 0; j < n; ++j) {
            const long row = std::min<long>(t + j, static_cast<long>(ep.actions.size()) - 1);
            const CanonicalState want = policy.normalize_action(ep.actions[static_cast<size_t>(row)], desc);
            for (long d = 0; d < canon::kDim; ++d) {
                const float got = batch.actions.data()[static_cast<size_t>((b * n + j) * canon::kDim + d)];
                CHECK(got == static_cast<float>(want.values[static_cast<size_t>(d)]));
                if (!desc.action_active_slots[static_cast<size_t>(d)]) CHECK(got == 0.0f);
                CHECK(std::abs(got) <= 1.0f);
            }
        }
    }
    CHECK(saw_start);
    CHECK(saw_tail);
    CHECK_THROWS_AS(sample_batch(data, policy, 0, rng), layout_error);
}

TEST_CASE("policy loss is finite and reaches every parameter") {
    const TrainingData& data = reach_data();
    const PolicyConfig pc = PolicyConfig::from_config(tiny_config());
    DiffusionPolicy<float> policy(pc, data.stats());
    Rng data_rng(3, "loss-data"), noise_rng(3, "loss-noise");
    const TrainBatch<float> batch = sample_batch(data, policy, 3, data_rng);

    Tape<float> tape;
    {
        typename Tape<float>::Scope scope(tape);
        const Tensor<float> loss = policy.loss(batch.obs, batch.actions, batch.emb->desc, noise_rng);
        CHECK(std::isfinite(loss.item()));
        CHECK(loss.item() > 0.0f);
        tape.backward(loss);
    }
    for (const auto& [name, p] : policy.params().items) {
        INFO("parameter " << name);
        CHECK(tape.grad(p) != nullptr);
    }

    const Tensor<float> bad = Tensor<float>::zeros({3, pc.dims.action_horizon + 1, canon::kDim});
    CHECK_THROWS_AS(policy.loss(batch.obs, bad, batch.emb->desc, noise_rng), shape_error);
    CHECK_THROWS_AS(policy.loss(batch.obs, batch.actions, synth_embodiment("duo3").desc, noise_rng), layout_error);
}

TEST_CASE("micro-batch accumulation averages per-tape gradients exactly") {
    const TrainingData& data = reach_data();
    const PolicyConfig pc = PolicyConfig::from_config(tiny_config());
    DiffusionPolicy<float> policy(pc, data.stats());
    Rng data_rng(9, "acc-data"), noise_rng(9, "acc-noise");

    Tape<float> acc;
    std::vector<std::vector<float>> per_tape;
    for (int mb = 0; mb < 2; ++mb) {
        Tape<float> tape;
        typename Tape<float>::Scope scope(tape);
        const TrainBatch<float> batch = sample_batch(data, policy, 2, data_rng);
        const Tensor<float> loss = policy.loss(batch.obs, batch.actions, batch.emb->desc, noise_rng);
        tape.backward(loss);
        for (size_t i = 0; i < policy.params().items.size(); ++i) {
            const auto& p = policy.params().items[i].second;
            const std::vector<float>* g = tape.grad(p);
            REQUIRE(g != nullptr);
            if (mb == 0)
                per_tape.push_back(*g);
            else
                for (size_t j = 0; j < g->size(); ++j)
                    per_tape[i][j] = per_tape[i][j] * 0.5f + (*g)[j] * 0.5f;
            std::vector<float>& a = acc.grad_buf(p.node());
            for (size_t j = 0; j < a.size(); ++j) a[j] += (*g)[j] * 0.5f;
        }
    }
    // Both sides compute g1*0.5 + g2*0.5 in the same order, so equality is
    // bitwise, and a gradient that never accumulates would show as all-zero.
    for (size_t i = 0; i < policy.params().items.size(); ++i) {
        const auto& a = acc.grad_buf(policy.params().items[i].second.node());
        CHECK(a == per_tape[i]);
    }
}

TEST_CASE("a short optimization run reduces the denoising loss deterministically") {
    const TrainingData& data = reach_data();
    const PolicyConfig pc = PolicyConfig::from_config(tiny_config());
    TrainOptions opt;
    opt.batch = 4;
    opt.global_batch = 4;
    opt.lr = 3e-3;
    opt.warmup = 5;
    opt.ema_decay = 0.5;
    opt.seed = 21;

    DiffusionPolicy<float> p1(pc, data.stats());
    DiffusionPolicy<float> p2(pc, data.stats());
    Trainer<float> t1(p1, data, opt);
    Trainer<float> t2(p2, data, opt);

    std::vector<double> losses;
    for (int i = 0; i < 80; ++i) {
        const StepMetrics m1 = t1.step();
        const StepMetrics m2 = t2.step();
        CHECK(m1.step == i + 1);
        CHECK(m1.loss == m2.loss);  // same seeds, same stream positions
        CHECK(m1.lr == doctest::Approx(warmup_lr(opt.lr, i + 1, opt.warmup)).epsilon(1e-14));
        CHECK(m1.grad_norm > 0.0);
        CHECK(std::isfinite(m1.loss));
        losses.push_back(m1.loss);
    }
    CHECK(same_params(p1.params(), p2.params()));

    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
        first += losses[static_cast<size_t>(i)] / 10.0;
        last += losses[losses.size() - 10 + static_cast<size_t>(i)] / 10.0;
    }
    CHECK(last < 0.85 * first);

    // Shadows track behind the raw parameters but not at them.
    bool shadow_differs = false;
    for (size_t i = 0; i < p1.params().items.size() && !shadow_differs; ++i)
        shadow_differs = t1.ema().shadows()[i] != p1.params().items[i].second.data();
    CHECK(shadow_differs);

    TrainOptions badopt = opt;
    badopt.global_batch = 6;
    CHECK_THROWS_AS(Trainer<float>(p1, data, badopt), layout_error);
}

TEST_CASE("checkpoints restore training bit-identically") {
    const TrainingData& data = reach_data();
    Config cfg = tiny_config();
    const PolicyConfig pc = PolicyConfig::from_config(cfg);
    TrainOptions opt;
    opt.batch = 2;
    opt.global_batch = 4;
    opt.lr = 1e-3;
    opt.warmup = 3;
    opt.ema_decay = 0.9;
    opt.seed = 77;

    DiffusionPolicy<float> p1(pc, data.stats());
    Trainer<float> t1(p1, data, opt);
    t1.run(3);

    const auto dir = temp_dir("xpolicy-ckpt");
    std::filesystem::create_directories(dir);
    const auto path = dir / "step3.ckpt";
    save_checkpoint(path, cfg, p1.stats(), p1.params(), &t1.ema(), &t1.optimizer(), &t1.data_rng(),
                    &t1.noise_rng());

    const CheckpointInfo info = inspect_checkpoint(path);
    CHECK(info.version == 1);
    CHECK(info.elem_size == sizeof(float));
    CHECK(info.step == 3);
    CHECK(info.config == cfg);
    CHECK(info.has_ema);
    CHECK(info.has_optimizer);
    CHECK(info.has_rng);
    CHECK(info.params.size() == p1.params().items.size());
    CHECK(info.total_params == p1.params().total_size());
    CHECK(checkpoint_config(path) == cfg);
    CHECK(checkpoint_stats(path) == data.stats());

    // Rebuild from the stored config alone and resume.
    const Config cfg2 = checkpoint_config(path);
    DiffusionPolicy<float> p2(PolicyConfig::from_config(cfg2), checkpoint_stats(path));
    Trainer<float> t2(p2, data, opt);
    const long step = load_checkpoint(path, p2.params(), &t2.ema(), &t2.optimizer(), &t2.data_rng(),
                                      &t2.noise_rng());
    CHECK(step == 3);
    CHECK(t2.steps_done() == 3);
    CHECK(same_params(p1.params(), p2.params()));
    CHECK(t1.ema().shadows() == t2.ema().shadows());
    CHECK(t1.optimizer().first_moments() == t2.optimizer().first_moments());
    CHECK(t1.optimizer().second_moments() == t2.optimizer().second_moments());
    CHECK(t1.data_rng().state() == t2.data_rng().state());
    CHECK(t1.noise_rng().state() == t2.noise_rng().state());

    for (int i = 0; i < 10; ++i) {
        const StepMetrics m1 = t1.step();
        const StepMetrics m2 = t2.step();
        CHECK(m1.loss == m2.loss);
        CHECK(m1.grad_norm == m2.grad_norm);
    }
    CHECK(same_params(p1.params(), p2.params()));
    CHECK(t1.ema().shadows() == t2.ema().shadows());

    // Element width, missing sections, and truncation all fail loudly.
    DiffusionPolicy<double> pd(pc, data.stats());
    CHECK_THROWS_AS(load_checkpoint(path, pd.params()), io_error);

    const auto bare = dir / "bare.ckpt";
    save_checkpoint<float>(bare, cfg, p1.stats(), p1.params(), nullptr, nullptr, nullptr, nullptr);
    DiffusionPolicy<float> p3(pc, data.stats());
    CHECK(load_checkpoint(bare, p3.params()) == 0);
    CHECK(same_params(p1.params(), p3.params()));
    Ema<float> ema3(p3.params(), 0.9);
    CHECK_THROWS_AS(load_checkpoint(bare, p3.params(), &ema3), io_error);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto broken = dir / "broken.ckpt";
    std::ofstream out(broken, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    DiffusionPolicy<float> p4(pc, data.stats());
    CHECK_THROWS_AS(load_checkpoint(broken, p4.params()), io_error);
}

TEST_CASE("sampling produces bounded executable plans and plugs into the evaluator") {
    const TrainingData& data = reach_data();
    const PolicyConfig pc = PolicyConfig::from_config(tiny_config());
    DiffusionPolicy<float> policy(pc, data.stats());
    const SynthEmbodiment& emb = synth_embodiment("duo2");
    const TrainEpisode& ep = data.episodes()[0];

    SampleObs so;
    for (long dt = pc.dims.obs_horizon - 1; dt >= 0; --dt) {
        const long row = std::max<long>(0, 1 - dt);
        std::vector<Image> frame;
        for (long c = 0; c < ep.cameras; ++c) frame.push_back(ep.view(row, c));
        so.views.push_back(std::move(frame));
        so.proprio.push_back(policy.normalize_state(ep.states[static_cast<size_t>(row)], emb.desc));
    }
    so.prompt = ep.prompt;

    Rng r1(101, "act"), r2(101, "act");
    const auto plan = policy.act(so, emb.desc, r1);
    const auto plan2 = policy.act(so, emb.desc, r2);
    REQUIRE(static_cast<long>(plan.size()) == pc.dims.action_horizon);
    CHECK(plan == plan2);
    const std::vector<long> slots = active_indices(emb.desc.action_active_slots);
    for (const auto& row : plan) {
        REQUIRE(row.size() == slots.size());
        for (size_t j = 0; j < row.size(); ++j) {
            CHECK(std::isfinite(row[j]));
            const Bounds b = data.stats().at(action_stats_id(emb.desc.id), slots[j]);
            const double slack = 0.03 * (b.hi - b.lo);
            CHECK(row[j] >= b.lo - slack);
            CHECK(row[j] <= b.hi + slack);
        }
    }

    EvalConfig ec;
    ec.axis = EvalAxis::InDistribution;
    ec.episodes = 2;
    ec.seed = 404;
    ec.obs_horizon = pc.dims.obs_horizon;
    ec.action_horizon = pc.dims.action_horizon;
    ec.exec_horizon = pc.dims.exec_horizon;
    ec.step_budget = 6;
    const EvalResult a = evaluate_policy(rollout_adapter(policy, emb, 5), emb, {Task::Reach}, ec);
    const EvalResult b = evaluate_policy(rollout_adapter(policy, emb, 5), emb, {Task::Reach}, ec);
    CHECK(a.episodes == 2);
    CHECK(a.successes == b.successes);
    CHECK(a.rate == doctest::Approx(static_cast<double>(a.successes) / 2.0));
}
