#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xpolicy/checkpoint.hpp"
#include "xpolicy/train.hpp"

using namespace xpolicy;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::string> parse_embodiments(const std::string& arg) {
    if (arg == "all") {
        std::vector<std::string> ids;
        for (const auto& e : synth_embodiments()) ids.push_back(e.desc.id);
        return ids;
    }
    auto ids = split_csv(arg);
    for (const auto& id : ids) synth_embodiment(id);  // validates
    return ids;
}

std::vector<Task> parse_tasks(const std::string& arg) {
    if (arg == "all") return all_tasks();
    std::vector<Task> tasks;
    for (const auto& name : split_csv(arg)) tasks.push_back(task_from_name(name));
    return tasks;
}

Config make_config(const std::string& path, const std::vector<std::string>& sets) {
    Config c = path.empty() ? Config::defaults() : Config::load(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw io_error("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(kv.substr(0, eq)), value = trim(kv.substr(eq + 1));
        if (key.empty()) throw io_error("--set expects key=value, got '" + kv + "'");
        c.set(key, value);
    }
    return c;
}

template <typename F>
int with_precision(const Config& cfg, F&& f) {
    if (cfg.str("Precision") == "f64") return f(double{});
    return f(float{});
}

void write_json(const std::string& path, const json& j) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << j.dump(2) << '\n';
}

int cmd_generate(const std::string& out, const std::string& embodiments, const std::string& tasks,
                 long episodes, uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const DatasetManifest m = build_dataset(out, parse_embodiments(embodiments), parse_tasks(tasks), episodes, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("dataset %s: %ld episodes across %zu cells, %ld steps at %ldpx, %.1fs\n", out.c_str(), m.total(),
                m.cells.size(), m.steps, m.resolution, secs);
    for (const auto& cell : m.cells)
        std::printf("  %-6s %-8s %ld episodes\n", cell.embodiment_id.c_str(), cell.task.c_str(), cell.episodes);
    std::printf("stats: %s\n", dataset_stats_path(out).string().c_str());
    return 0;
}

int cmd_fit_stats(const std::string& data, const std::string& out) {
    const DatasetManifest m = load_manifest(data);
    ScalingStore store;
    for (const auto& file : m.files) {
        const Episode ep = load_episode(std::filesystem::path(data) / file);
        const EmbodimentDescriptor& desc = synth_embodiment(ep.embodiment_id).desc;
        fit_rows(store, desc.id, desc.active_slots, ep.states);
        fit_rows(store, action_stats_id(desc.id), desc.action_active_slots, ep.actions);
    }
    const std::string path = out.empty() ? dataset_stats_path(data).string() : out;
    store.save(path);
    std::printf("fitted %zu bounds from %ld episodes -> %s\n", store.entries().size(), m.total(), path.c_str());
    return 0;
}

template <typename T>
void save_trainer_checkpoint(const std::filesystem::path& path, const Config& cfg, DiffusionPolicy<T>& policy,
                             Trainer<T>& trainer) {
    save_checkpoint(path, cfg, policy.stats(), policy.params(), &trainer.ema(), &trainer.optimizer(),
                    &trainer.data_rng(), &trainer.noise_rng());
}

int cmd_train(const std::string& data_dir, const std::string& out_dir, const std::string& config_path,
              const std::vector<std::string>& sets, uint64_t seed, long steps_override,
              const std::string& resume, long ckpt_every, long log_every) {
    Config cfg;
    if (!resume.empty()) {
        if (!config_path.empty() || !sets.empty())
            throw io_error("--resume carries its own configuration; drop --config/--set");
        cfg = checkpoint_config(resume);
    } else {
        cfg = make_config(config_path, sets);
    }
    return with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        const TrainingData data = TrainingData::load(data_dir);
        DiffusionPolicy<T> policy(PolicyConfig::from_config(cfg), data.stats());
        TrainOptions opt = TrainOptions::from_config(cfg);
        opt.seed = seed;
        Trainer<T> trainer(policy, data, opt);
        if (!resume.empty()) {
            const long at = load_checkpoint(resume, policy.params(), &trainer.ema(), &trainer.optimizer(),
                                            &trainer.data_rng(), &trainer.noise_rng());
            std::printf("resumed %s at step %ld\n", resume.c_str(), at);
        }
        const long total = steps_override > 0 ? steps_override : opt.steps;
        std::filesystem::create_directories(out_dir);
        cfg.save(std::filesystem::path(out_dir) / "config.txt");
        std::ofstream metrics(std::filesystem::path(out_dir) / "metrics.jsonl", std::ios::app);
        std::printf("training %ld parameters to step %ld (batch %ld, global %ld, %zu episodes)\n",
                    policy.params().total_size(), total, opt.batch, opt.global_batch, data.episodes().size());
        try {
            while (trainer.steps_done() < total) {
                const StepMetrics m = trainer.step();
                metrics << json{{"step", m.step},
                                {"loss", m.loss},
                                {"lr", m.lr},
                                {"grad_norm", m.grad_norm},
                                {"seconds", m.seconds}}
                               .dump()
                        << '\n';
                if (log_every > 0 && (m.step % log_every == 0 || m.step == total)) {
                    std::printf("step %6ld  loss %.4f  lr %.2e  gnorm %7.3f  %.2fs/step\n", m.step, m.loss, m.lr,
                                m.grad_norm, m.seconds);
                    std::fflush(stdout);
                    metrics.flush();
                }
                if (ckpt_every > 0 && m.step % ckpt_every == 0 && m.step != total) {
                    const auto path = std::filesystem::path(out_dir) / ("step-" + std::to_string(m.step) + ".ckpt");
                    save_trainer_checkpoint(path, cfg, policy, trainer);
                }
            }
        } catch (const training_error& e) {
            const auto path = std::filesystem::path(out_dir) / "diagnostic.ckpt";
            save_trainer_checkpoint(path, cfg, policy, trainer);
            std::fprintf(stderr, "training aborted: %s\ndiagnostic checkpoint: %s\n", e.what(), path.c_str());
            return 3;
        }
        const auto last = std::filesystem::path(out_dir) / "last.ckpt";
        save_trainer_checkpoint(last, cfg, policy, trainer);
        std::printf("done: %s\n", last.c_str());
        return 0;
    });
}

json eval_cell_json(const std::string& emb, const EvalResult& r) {
    return json{{"embodiment", emb}, {"episodes", r.episodes},   {"successes", r.successes},
                {"rate", r.rate},    {"wilson_lo", r.wilson_lo}, {"wilson_hi", r.wilson_hi}};
}

int report_eval(const std::string& label, EvalAxis axis, const std::vector<std::string>& ids,
                const std::function<RolloutPolicy(const SynthEmbodiment&)>& make_policy,
                const std::vector<Task>& tasks, const EvalConfig& base, const std::string& json_out) {
    json cells = json::array();
    long total = 0, hits = 0;
    for (const auto& id : ids) {
        const SynthEmbodiment& emb = synth_embodiment(id);
        const EvalResult r = evaluate_policy(make_policy(emb), emb, tasks, base);
        total += r.episodes;
        hits += r.successes;
        std::printf("%s axis=%s embodiment=%-6s episodes=%ld successes=%ld rate=%.3f wilson=[%.3f, %.3f]\n",
                    label.c_str(), axis_name(axis).c_str(), id.c_str(), r.episodes, r.successes, r.rate, r.wilson_lo,
                    r.wilson_hi);
        cells.push_back(eval_cell_json(id, r));
    }
    const auto [lo, hi] = wilson_interval(hits, total);
    std::printf("%s axis=%s overall episodes=%ld successes=%ld rate=%.3f wilson=[%.3f, %.3f]\n", label.c_str(),
                axis_name(axis).c_str(), total, hits, total ? static_cast<double>(hits) / total : 0.0, lo, hi);
    write_json(json_out, json{{"label", label},
                              {"axis", axis_name(axis)},
                              {"cells", cells},
                              {"episodes", total},
                              {"successes", hits},
                              {"rate", total ? static_cast<double>(hits) / total : 0.0},
                              {"wilson_lo", lo},
                              {"wilson_hi", hi}});
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& baseline, const std::string& axis_arg,
             const std::string& embodiments, const std::string& tasks_arg, long episodes, uint64_t seed,
             bool use_ema, double random_scale, const std::string& json_out) {
    const EvalAxis axis = axis_from_name(axis_arg);
    const std::vector<std::string> ids = parse_embodiments(embodiments);
    const std::vector<Task> tasks = parse_tasks(tasks_arg);

    if (!baseline.empty()) {
        const Config cfg = Config::defaults();
        EvalConfig ec;
        ec.axis = axis;
        ec.episodes = episodes;
        ec.seed = seed;
        ec.obs_horizon = cfg.integer("obs horizon");
        ec.action_horizon = cfg.integer("action horizon");
        ec.exec_horizon = cfg.integer("exec horizon");
        auto make_policy = [&](const SynthEmbodiment&) {
            if (baseline == "expert") return expert_as_policy(ec.action_horizon);
            if (baseline == "random") return random_policy(seed, ec.action_horizon, random_scale);
            throw io_error("unknown baseline '" + baseline + "' (expert|random)");
        };
        return report_eval(baseline, axis, ids, make_policy, tasks, ec, json_out);
    }

    const Config cfg = checkpoint_config(ckpt);
    return with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        DiffusionPolicy<T> policy(PolicyConfig::from_config(cfg), checkpoint_stats(ckpt));
        if (use_ema) {
            Ema<T> shadows(policy.params(), 1.0);
            load_checkpoint(ckpt, policy.params(), &shadows);
            shadows.apply(policy.params());
        } else {
            load_checkpoint(ckpt, policy.params());
        }
        EvalConfig ec;
        ec.axis = axis;
        ec.episodes = episodes;
        ec.seed = seed;
        ec.obs_horizon = policy.config().dims.obs_horizon;
        ec.action_horizon = policy.config().dims.action_horizon;
        ec.exec_horizon = policy.config().dims.exec_horizon;
        auto make_policy = [&](const SynthEmbodiment& emb) { return rollout_adapter(policy, emb, seed); };
        return report_eval(use_ema ? "policy(ema)" : "policy(raw)", axis, ids, make_policy, tasks, ec, json_out);
    });
}

int cmd_inspect(const std::string& ckpt, bool list_params) {
    const CheckpointInfo info = inspect_checkpoint(ckpt);
    std::printf("checkpoint %s\n", ckpt.c_str());
    std::printf("  version %u, %u-byte elements, step %ld\n", info.version, info.elem_size, info.step);
    std::printf("  parameters: %zu tensors, %ld elements\n", info.params.size(), info.total_params);
    std::printf("  sections: ema=%s optimizer=%s rng=%s\n", info.has_ema ? "yes" : "no",
                info.has_optimizer ? "yes" : "no", info.has_rng ? "yes" : "no");
    std::printf("  config hash %016llx\n", static_cast<unsigned long long>(info.config_hash));
    if (list_params)
        for (const auto& [name, numel] : info.params) std::printf("  %8ld  %s\n", numel, name.c_str());
    return 0;
}

int cmd_bench_attn(const std::string& config_path, const std::vector<std::string>& sets,
                   const std::string& embodiment, long prompt_len, long repeats, const std::string& json_out) {
    const Config cfg = make_config(config_path, sets);
    const ModelDims dims = ModelDims::from_config(cfg);
    const SynthEmbodiment& emb = synth_embodiment(embodiment);
    const long S = emb.desc.camera_count * dims.patch_grid * dims.patch_grid + 2;
    const long T_steps = dims.obs_horizon;
    const long L = prompt_len;

    const AttentionCounts fact = factorized_entry_counts(T_steps, S, L);
    const long full = full_entry_count(T_steps, S, L);
    std::printf("attention score entries per block (T=%ld steps, S=%ld state tokens, L=%ld prompt tokens)\n",
                T_steps, S, L);
    std::printf("  factorized: temporal %ld + state %ld + language %ld = %ld\n", fact.temporal, fact.state,
                fact.language, fact.total());
    std::printf("  full:       %ld\n", full);
    std::printf("  ratio:      %.2fx\n", static_cast<double>(full) / static_cast<double>(fact.total()));

    Rng rng(1, "bench-attn");
    ParamSet<float> ps_f, ps_full;
    JstEncoder<float> enc_f(dims, rng, ps_f, EncoderMode::Factorized);
    JstEncoder<float> enc_full(dims, rng, ps_full, EncoderMode::Full);
    const AttentionCounts measured = enc_f.measured_entry_counts(T_steps, S, L);
    if (measured.total() != fact.total()) throw numeric_error("measured mask entries diverge from the closed form");

    const long B = 4;
    ObsBatch<float> batch;
    batch.h = T_steps;
    batch.S = S;
    batch.L = L;
    std::vector<float> obs(static_cast<size_t>(B * T_steps * S * dims.embed));
    std::vector<float> lang(static_cast<size_t>(B * L * dims.embed));
    for (auto& v : obs) v = static_cast<float>(rng.normal(0.0, 1.0));
    for (auto& v : lang) v = static_cast<float>(rng.normal(0.0, 1.0));
    batch.obs = Tensor<float>::from({B, T_steps * S, dims.embed}, obs);
    batch.lang = Tensor<float>::from({B, L, dims.embed}, lang);

    auto time_encoder = [&](const JstEncoder<float>& enc) {
        enc.encode(batch);  // warmup
        const auto t0 = std::chrono::steady_clock::now();
        for (long i = 0; i < repeats; ++i) enc.encode(batch);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() * 1e3 /
               static_cast<double>(repeats);
    };
    const double ms_f = time_encoder(enc_f);
    const double ms_full = time_encoder(enc_full);
    std::printf("  encode (batch %ld, %ld reps): factorized %.3f ms, full %.3f ms, speedup %.2fx\n", B, repeats,
                ms_f, ms_full, ms_full / ms_f);
    write_json(json_out, json{{"steps", T_steps},
                              {"state_tokens", S},
                              {"prompt_tokens", L},
                              {"factorized_entries", fact.total()},
                              {"temporal", fact.temporal},
                              {"state", fact.state},
                              {"language", fact.language},
                              {"full_entries", full},
                              {"entry_ratio", static_cast<double>(full) / static_cast<double>(fact.total())},
                              {"factorized_ms", ms_f},
                              {"full_ms", ms_full},
                              {"time_speedup", ms_full / ms_f}});
    return 0;
}

int cmd_bench_latency(const std::string& ckpt, const std::string& config_path, const std::string& embodiment,
                      long repeats, uint64_t seed, bool compare_full, const std::string& json_out) {
    Config cfg = ckpt.empty() ? make_config(config_path, {}) : checkpoint_config(ckpt);
    const SynthEmbodiment& emb = synth_embodiment(embodiment);

    ScalingStore stats;
    if (ckpt.empty()) {
        // Placeholder bounds so an untrained policy can be timed.
        for (long slot : active_indices(emb.desc.active_slots)) stats.set(emb.desc.id, slot, Bounds{-3.2, 3.2});
        for (long slot : active_indices(emb.desc.action_active_slots))
            stats.set(action_stats_id(emb.desc.id), slot, Bounds{-0.35, 0.35});
    } else {
        stats = checkpoint_stats(ckpt);
    }

    return with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        const PolicyConfig pc = PolicyConfig::from_config(cfg);
        DiffusionPolicy<T> policy(pc, stats);
        if (!ckpt.empty()) load_checkpoint(ckpt, policy.params());

        Rng rng(seed, "bench-latency");
        const WorldState w = sample_world(emb, Task::Reach, rng, EvalAxis::InDistribution);
        const std::vector<Image> views = world_views(w);
        const std::vector<double> row = world_state_row(w);
        SampleObs so;
        for (long i = 0; i < pc.dims.obs_horizon; ++i) {
            so.views.push_back(views);
            so.proprio.push_back(policy.normalize_state(row, emb.desc));
        }
        so.prompt = tokenize_prompt(task_prompt(Task::Reach));

        Rng act_rng(seed, "bench-act");
        policy.act(so, emb.desc, act_rng);  // warmup
        std::vector<double> ms;
        for (long i = 0; i < repeats; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            policy.act(so, emb.desc, act_rng);
            ms.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() * 1e3);
        }
        std::sort(ms.begin(), ms.end());
        double mean = 0.0;
        for (double v : ms) mean += v / static_cast<double>(ms.size());
        const double p50 = ms[ms.size() / 2], p95 = ms[static_cast<size_t>(0.95 * (ms.size() - 1))];
        std::printf("decision latency over %ld reps (%ld-step sampler, exec horizon %ld):\n", repeats,
                    pc.sample_steps, pc.dims.exec_horizon);
        std::printf("  mean %.2f ms  p50 %.2f ms  p95 %.2f ms  (%.1f decisions/s, %.2f ms/control step)\n", mean,
                    p50, p95, 1e3 / mean, mean / static_cast<double>(pc.dims.exec_horizon));

        json j{{"repeats", repeats},       {"sample_steps", pc.sample_steps},
               {"mean_ms", mean},          {"p50_ms", p50},
               {"p95_ms", p95},            {"decisions_per_s", 1e3 / mean},
               {"ms_per_control_step", mean / static_cast<double>(pc.dims.exec_horizon)}};
        if (compare_full) {
            PolicyConfig full_pc = pc;
            full_pc.sample_steps = full_pc.diffusion_steps;
            DiffusionPolicy<T> full_policy(full_pc, stats);
            if (!ckpt.empty()) load_checkpoint(ckpt, full_policy.params());
            Rng full_rng(seed, "bench-act");
            const auto t0 = std::chrono::steady_clock::now();
            full_policy.act(so, emb.desc, full_rng);
            const double full_ms = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() * 1e3;
            std::printf("  full %ld-step chain: %.1f ms (%.1fx the %ld-step sampler)\n", full_pc.sample_steps,
                        full_ms, full_ms / mean, pc.sample_steps);
            j["full_chain_ms"] = full_ms;
            j["full_chain_speedup"] = full_ms / mean;
        }
        write_json(json_out, j);
        return 0;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale cross-embodiment diffusion policy"};
    app.require_subcommand(1);

    std::string out, data, config_path, resume, ckpt, baseline, embodiments = "all", tasks = "all";
    std::string axis = "id", json_out;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    long episodes = 60, steps = 0, ckpt_every = 0, log_every = 50, eval_episodes = 100;
    long repeats = 20, prompt_len = kPromptMaxTokens;
    bool list_params = false, use_ema = true, compare_full = false;
    double random_scale = 0.1;

    auto* gen = app.add_subcommand("generate-data", "roll the scripted expert into an episode dataset");
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--embodiments", embodiments, "comma list or 'all'");
    gen->add_option("--tasks", tasks, "comma list or 'all'");
    gen->add_option("--episodes", episodes, "episodes per (embodiment, task) cell");
    gen->add_option("--seed", seed, "generation seed");

    auto* fit = app.add_subcommand("fit-stats", "refit scaling bounds from an existing dataset");
    fit->add_option("--data", data, "dataset directory")->required();
    fit->add_option("--out", out, "output path (default: the dataset's stats file)");

    auto* train = app.add_subcommand("train", "optimize a policy on a dataset");
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--out", out, "run directory for checkpoints and metrics")->required();
    train->add_option("--config", config_path, "config file (default: built-in defaults)");
    train->add_option("--set", sets, "config override key=value (repeatable)");
    train->add_option("--seed", seed, "training seed");
    train->add_option("--steps", steps, "stop at this step (default: config 'train steps')");
    train->add_option("--resume", resume, "checkpoint to continue from");
    train->add_option("--checkpoint-every", ckpt_every, "periodic checkpoint interval (0 = final only)");
    train->add_option("--log-every", log_every, "console log interval");

    auto* ev = app.add_subcommand("eval", "closed-loop success rate on a generalization axis");
    ev->add_option("--checkpoint", ckpt, "policy checkpoint");
    ev->add_option("--baseline", baseline, "expert|random instead of a checkpoint");
    ev->add_option("--axis", axis, "id|object|scene");
    ev->add_option("--embodiments", embodiments, "comma list or 'all'");
    ev->add_option("--tasks", tasks, "comma list or 'all'");
    ev->add_option("--episodes", eval_episodes, "episodes per embodiment");
    ev->add_option("--seed", seed, "evaluation seed");
    ev->add_flag("--ema,!--no-ema", use_ema, "evaluate the shadow-average weights (default on)");
    ev->add_option("--random-scale", random_scale, "random baseline delta scale");
    ev->add_option("--json", json_out, "write results to this JSON file");

    auto* insp = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
    insp->add_option("--checkpoint", ckpt, "checkpoint path")->required();
    insp->add_flag("--params", list_params, "list every parameter tensor");

    auto* battn = app.add_subcommand("bench-attn", "attention entry counts and encoder timing");
    battn->add_option("--config", config_path, "config file (default: built-in defaults)");
    battn->add_option("--set", sets, "config override key=value (repeatable)");
    battn->add_option("--embodiment", embodiments, "embodiment id")->default_val("duo3");
    battn->add_option("--prompt-tokens", prompt_len, "language length");
    battn->add_option("--repeats", repeats, "timing repetitions");
    battn->add_option("--json", json_out, "write results to this JSON file");

    auto* blat = app.add_subcommand("bench-latency", "end-to-end decision latency");
    blat->add_option("--checkpoint", ckpt, "policy checkpoint (default: fresh weights)");
    blat->add_option("--config", config_path, "config file when no checkpoint is given");
    blat->add_option("--embodiment", embodiments, "embodiment id")->default_val("duo3");
    blat->add_option("--repeats", repeats, "timing repetitions");
    blat->add_option("--seed", seed, "observation seed");
    blat->add_flag("--compare-full-chain", compare_full, "also time the full diffusion chain once");
    blat->add_option("--json", json_out, "write results to this JSON file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(out, embodiments, tasks, episodes, seed);
        if (fit->parsed()) return cmd_fit_stats(data, out);
        if (train->parsed())
            return cmd_train(data, out, config_path, sets, seed, steps, resume, ckpt_every, log_every);
        if (ev->parsed()) {
            if (ckpt.empty() == baseline.empty())
                throw io_error("eval needs exactly one of --checkpoint or --baseline");
            return cmd_eval(ckpt, baseline, axis, embodiments, tasks, eval_episodes, seed, use_ema, random_scale,
                            json_out);
        }
        if (insp->parsed()) return cmd_inspect(ckpt, list_params);
        if (battn->parsed()) return cmd_bench_attn(config_path, sets, embodiments, prompt_len, repeats, json_out);
        if (blat->parsed())
            return cmd_bench_latency(ckpt, config_path, embodiments, repeats, seed, compare_full, json_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
