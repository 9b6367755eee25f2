#include "xpolicy/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <memory>
#include <sstream>

namespace xpolicy {

EvalAxis axis_from_name(const std::string& name) {
    if (name == "id") return EvalAxis::InDistribution;
    if (name == "object") return EvalAxis::ObjectShift;
    if (name == "scene") return EvalAxis::SceneShift;
    throw io_error("unknown evaluation axis '" + name + "' (expected id|object|scene)");
}

std::string axis_name(EvalAxis axis) {
    switch (axis) {
        case EvalAxis::InDistribution: return "id";
        case EvalAxis::ObjectShift: return "object";
        case EvalAxis::SceneShift: return "scene";
    }
    throw io_error("unhandled evaluation axis");
}

std::string action_stats_id(const std::string& embodiment_id) { return embodiment_id + "#actions"; }

namespace {

std::pair<double, double> sample_reachable(const PlanarArm& arm, Rng& rng) {
    const double r_lo = std::max(0.30 * arm.reach(), arm.inner_reach() + 0.08);
    const double r_hi = 0.92 * arm.reach();
    const double r = rng.uniform(r_lo, r_hi);
    const double th = rng.uniform(0.3, kPi - 0.3);  // keep goals above the base line
    return {arm.base_x + r * std::cos(th), arm.base_y + r * std::sin(th)};
}

void check_reachable(const PlanarArm& arm, double tx, double ty, const char* which) {
    const double d = std::hypot(tx - arm.base_x, ty - arm.base_y);
    if (d > arm.reach() - 0.02 || d < arm.inner_reach() + 0.02)
        throw generation_error(std::string(which) + " target at distance " + std::to_string(d) +
                               " outside arm annulus [" + std::to_string(arm.inner_reach()) + ", " +
                               std::to_string(arm.reach()) + "]");
}

}  // namespace

WorldState sample_world(const SynthEmbodiment& emb, Task task, Rng& rng, EvalAxis axis) {
    WorldState w;
    w.emb = &emb;
    w.task = task;
    w.prompt_variant = rng.pick(kPromptVariants);

    w.ql.resize(static_cast<size_t>(emb.left.joints()));
    w.qr.resize(static_cast<size_t>(emb.right.joints()));
    for (size_t j = 0; j < w.ql.size(); ++j)
        w.ql[j] = j == 0 ? rng.uniform(kPi / 4, 3 * kPi / 4) : rng.uniform(-0.8, 0.8);
    for (size_t j = 0; j < w.qr.size(); ++j)
        w.qr[j] = j == 0 ? rng.uniform(kPi / 4, 3 * kPi / 4) : rng.uniform(-0.8, 0.8);

    std::tie(w.tx, w.ty) = sample_reachable(emb.left, rng);
    if (task == Task::BiReach) std::tie(w.t2x, w.t2y) = sample_reachable(emb.right, rng);

    w.target_radius = kTargetRadius;
    if (axis == EvalAxis::ObjectShift) w.target_radius *= rng.uniform(0.7, 1.3);

    w.style = axis == EvalAxis::SceneShift ? kTrainStyles + static_cast<int>(rng.pick(kSceneStyles - kTrainStyles))
                                           : static_cast<int>(rng.pick(kTrainStyles));

    const long n_distract = rng.pick(4);
    for (long i = 0; i < n_distract; ++i) {
        Blob d;
        d.shape = axis == EvalAxis::ObjectShift ? (rng.pick(2) == 0 ? BlobShape::Diamond : BlobShape::Ring)
                                                : (rng.pick(2) == 0 ? BlobShape::Circle : BlobShape::Square);
        d.radius = rng.uniform(0.10, 0.18);
        if (axis == EvalAxis::ObjectShift) d.radius *= rng.uniform(0.7, 1.3);
        d.b = 0.85;
        for (int tries = 0; tries < 50; ++tries) {
            d.x = rng.uniform(-1.25, 1.25);
            d.y = rng.uniform(0.10, 1.25);
            const bool clear = std::hypot(d.x - w.tx, d.y - w.ty) > 0.30 &&
                               (task != Task::BiReach || std::hypot(d.x - w.t2x, d.y - w.t2y) > 0.30);
            if (clear) break;
        }
        w.distractors.push_back(d);
    }

    w.cameras = default_cameras(emb.desc.camera_count);
    if (axis == EvalAxis::SceneShift)
        for (auto& cam : w.cameras) {
            cam.angle += rng.uniform(-0.02, 0.02);
            cam.cx += rng.uniform(-0.015, 0.015);
            cam.cy += rng.uniform(-0.015, 0.015);
            cam.zoom *= rng.uniform(0.985, 1.015);
        }
    return w;
}

Scene world_scene(const WorldState& w) {
    Scene s;
    s.style = w.style;
    Blob red;
    red.x = w.tx;
    red.y = w.ty;
    red.radius = w.target_radius;
    red.r = 1.0;
    s.blobs.push_back(red);
    if (w.task == Task::BiReach) {
        Blob yellow;
        yellow.x = w.t2x;
        yellow.y = w.t2y;
        yellow.radius = w.target_radius;
        yellow.r = 0.95;
        yellow.g = 0.85;
        s.blobs.push_back(yellow);
    }
    for (const auto& d : w.distractors) s.blobs.push_back(d);
    for (const PlanarArm* arm : {&w.emb->left, &w.emb->right}) {
        Scene::Stroke stroke;
        stroke.points = arm->points(arm == &w.emb->left ? w.ql : w.qr);
        stroke.width = 0.10;
        stroke.r = stroke.g = stroke.b = 0.55;
        s.strokes.push_back(std::move(stroke));
    }
    return s;
}

std::vector<Image> world_views(const WorldState& w) {
    auto views = render_views(world_scene(w), w.cameras, kRenderResolution);
    for (auto& v : views) v = quantize_pixels(v);
    return views;
}

std::vector<double> world_state_row(const WorldState& w) {
    std::vector<double> row;
    row.reserve(w.ql.size() + w.qr.size() + 4);
    row.insert(row.end(), w.ql.begin(), w.ql.end());
    row.insert(row.end(), w.qr.begin(), w.qr.end());
    const auto [lx, ly] = w.emb->left.tip(w.ql);
    const auto [rx, ry] = w.emb->right.tip(w.qr);
    row.push_back(lx);
    row.push_back(ly);
    row.push_back(rx);
    row.push_back(ry);
    return row;
}

std::vector<double> world_apply(WorldState& w, const std::vector<double>& deltas) {
    const size_t nl = w.ql.size(), nr = w.qr.size();
    if (deltas.size() != nl + nr)
        throw layout_error("world_apply: got " + std::to_string(deltas.size()) + " deltas for " +
                           std::to_string(nl + nr) + " joints");
    const std::vector<double> dl(deltas.begin(), deltas.begin() + static_cast<long>(nl));
    const std::vector<double> dr(deltas.begin() + static_cast<long>(nl), deltas.end());
    auto applied = apply_joint_deltas(w.ql, dl);
    const auto ar = apply_joint_deltas(w.qr, dr);
    applied.insert(applied.end(), ar.begin(), ar.end());
    return applied;
}

double left_error(const WorldState& w) {
    const auto [x, y] = w.emb->left.tip(w.ql);
    return std::hypot(w.tx - x, w.ty - y);
}

double right_error(const WorldState& w) {
    if (w.task != Task::BiReach) return 0.0;
    const auto [x, y] = w.emb->right.tip(w.qr);
    return std::hypot(w.t2x - x, w.t2y - y);
}

double task_error(const WorldState& w) { return std::max(left_error(w), right_error(w)); }

namespace {

void arm_toward(const PlanarArm& arm, const std::vector<double>& q, double gx, double gy,
                std::vector<double>& out) {
    const auto goal = arm.ik(gx, gy);
    for (size_t j = 0; j < q.size(); ++j)
        out.push_back(std::clamp(kExpertGain * (goal[j] - q[j]), -kJointDeltaCap, kJointDeltaCap));
}

std::vector<double> expert_deltas_core(const WorldState& w) {
    std::vector<double> deltas;
    deltas.reserve(w.ql.size() + w.qr.size());
    arm_toward(w.emb->left, w.ql, w.tx, w.ty, deltas);
    if (w.task == Task::BiReach)
        arm_toward(w.emb->right, w.qr, w.t2x, w.t2y, deltas);
    else
        deltas.insert(deltas.end(), w.qr.size(), 0.0);
    return deltas;
}

}  // namespace

std::vector<double> expert_deltas(const WorldState& w, Rng& rng) {
    auto deltas = expert_deltas_core(w);
    for (double& d : deltas) d = std::clamp(d + rng.normal(0.0, kExpertNoise), -kJointDeltaCap, kJointDeltaCap);
    return deltas;
}

Episode scripted_expert(const WorldState& start, Rng& noise_rng) {
    check_reachable(start.emb->left, start.tx, start.ty, "red");
    if (start.task == Task::BiReach) check_reachable(start.emb->right, start.t2x, start.t2y, "yellow");

    WorldState w = start;
    Episode ep;
    ep.embodiment_id = w.emb->desc.id;
    ep.task = w.task;
    ep.prompt_variant = w.prompt_variant;
    ep.style = w.style;
    ep.target_x = w.tx;
    ep.target_y = w.ty;
    ep.target2_x = w.t2x;
    ep.target2_y = w.t2y;

    SuccessTracker tracker{w.task};
    ep.states.push_back(world_state_row(w));
    ep.views.push_back(world_views(w));
    tracker.observe(task_error(w));
    for (long t = 0; t < kEpisodeSteps; ++t) {
        const auto applied = world_apply(w, expert_deltas(w, noise_rng));
        ep.actions.push_back(applied);
        ep.states.push_back(world_state_row(w));
        ep.views.push_back(world_views(w));
        tracker.observe(task_error(w));
    }
    ep.success = tracker.success();
    return ep;
}

namespace {

constexpr char kEpisodeMagic[4] = {'X', 'P', 'B', 'R'};
constexpr uint32_t kEpisodeVersion = 1;
constexpr const char* kManifestMagic = "xpolicy-dataset v1";

template <typename T>
void write_pod(std::ostream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void write_str(std::ostream& f, const std::string& s) {
    write_pod<int64_t>(f, static_cast<int64_t>(s.size()));
    f.write(s.data(), static_cast<long>(s.size()));
}

std::string read_str(std::istream& f) {
    const auto n = read_pod<int64_t>(f);
    if (n < 0 || n > 4096) throw io_error("episode file: implausible string length");
    std::string s(static_cast<size_t>(n), '\0');
    f.read(s.data(), n);
    return s;
}

}  // namespace

void save_episode(const Episode& ep, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    f.write(kEpisodeMagic, 4);
    write_pod<uint32_t>(f, kEpisodeVersion);
    write_str(f, ep.embodiment_id);
    write_pod<int64_t>(f, static_cast<int64_t>(ep.task));
    write_pod<int64_t>(f, ep.prompt_variant);
    write_pod<int64_t>(f, ep.style);
    write_pod<uint8_t>(f, ep.success ? 1 : 0);
    write_pod<double>(f, ep.target_x);
    write_pod<double>(f, ep.target_y);
    write_pod<double>(f, ep.target2_x);
    write_pod<double>(f, ep.target2_y);

    const int64_t state_rows = static_cast<int64_t>(ep.states.size());
    const int64_t state_dim = state_rows ? static_cast<int64_t>(ep.states[0].size()) : 0;
    const int64_t action_rows = static_cast<int64_t>(ep.actions.size());
    const int64_t action_dim = action_rows ? static_cast<int64_t>(ep.actions[0].size()) : 0;
    const int64_t cams = ep.views.empty() ? 0 : static_cast<int64_t>(ep.views[0].size());
    const int64_t res = cams && !ep.views[0].empty() ? ep.views[0][0].size : 0;
    write_pod<int64_t>(f, state_rows);
    write_pod<int64_t>(f, state_dim);
    write_pod<int64_t>(f, action_rows);
    write_pod<int64_t>(f, action_dim);
    write_pod<int64_t>(f, cams);
    write_pod<int64_t>(f, res);

    for (const auto& row : ep.states) {
        if (static_cast<int64_t>(row.size()) != state_dim) throw io_error("save_episode: ragged state rows");
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<long>(row.size() * sizeof(double)));
    }
    for (const auto& row : ep.actions) {
        if (static_cast<int64_t>(row.size()) != action_dim) throw io_error("save_episode: ragged action rows");
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<long>(row.size() * sizeof(double)));
    }
    if (static_cast<int64_t>(ep.views.size()) != state_rows) throw io_error("save_episode: views rows != state rows");
    std::vector<uint8_t> buf;
    for (const auto& per_state : ep.views) {
        if (static_cast<int64_t>(per_state.size()) != cams) throw io_error("save_episode: ragged camera views");
        for (const auto& img : per_state) {
            if (img.size != res) throw io_error("save_episode: mixed view resolutions");
            buf.resize(img.px.size());
            for (size_t i = 0; i < img.px.size(); ++i)
                buf[i] = static_cast<uint8_t>(std::lround(std::clamp(img.px[i], 0.0, 1.0) * 255.0));
            f.write(reinterpret_cast<const char*>(buf.data()), static_cast<long>(buf.size()));
        }
    }
    if (!f) throw io_error("short write to " + path.string());
}

Episode load_episode(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kEpisodeMagic, 4) != 0) throw io_error(path.string() + ": not an episode file");
    const auto version = read_pod<uint32_t>(f);
    if (version != kEpisodeVersion)
        throw io_error(path.string() + ": unsupported episode version " + std::to_string(version));

    Episode ep;
    ep.embodiment_id = read_str(f);
    const auto task = read_pod<int64_t>(f);
    if (task < 0 || task >= kTaskCount) throw io_error(path.string() + ": bad task id");
    ep.task = static_cast<Task>(task);
    ep.prompt_variant = read_pod<int64_t>(f);
    ep.style = static_cast<int>(read_pod<int64_t>(f));
    ep.success = read_pod<uint8_t>(f) != 0;
    ep.target_x = read_pod<double>(f);
    ep.target_y = read_pod<double>(f);
    ep.target2_x = read_pod<double>(f);
    ep.target2_y = read_pod<double>(f);

    const auto state_rows = read_pod<int64_t>(f);
    const auto state_dim = read_pod<int64_t>(f);
    const auto action_rows = read_pod<int64_t>(f);
    const auto action_dim = read_pod<int64_t>(f);
    const auto cams = read_pod<int64_t>(f);
    const auto res = read_pod<int64_t>(f);
    if (!f || state_rows < 0 || state_rows > 100000 || state_dim < 0 || state_dim > canon::kDim || action_rows < 0 ||
        action_dim < 0 || action_dim > canon::kDim || cams < 0 || cams > 4 || res < 0 || res > 4096)
        throw io_error(path.string() + ": implausible episode header");

    ep.states.assign(static_cast<size_t>(state_rows), std::vector<double>(static_cast<size_t>(state_dim)));
    for (auto& row : ep.states)
        f.read(reinterpret_cast<char*>(row.data()), static_cast<long>(row.size() * sizeof(double)));
    ep.actions.assign(static_cast<size_t>(action_rows), std::vector<double>(static_cast<size_t>(action_dim)));
    for (auto& row : ep.actions)
        f.read(reinterpret_cast<char*>(row.data()), static_cast<long>(row.size() * sizeof(double)));
    ep.views.assign(static_cast<size_t>(state_rows), std::vector<Image>());
    std::vector<uint8_t> buf(static_cast<size_t>(3 * res * res));
    for (auto& per_state : ep.views) {
        per_state.reserve(static_cast<size_t>(cams));
        for (int64_t c = 0; c < cams; ++c) {
            Image img(res);
            f.read(reinterpret_cast<char*>(buf.data()), static_cast<long>(buf.size()));
            for (size_t i = 0; i < buf.size(); ++i) img.px[i] = static_cast<double>(buf[i]) / 255.0;
            per_state.push_back(std::move(img));
        }
    }
    if (!f) throw io_error(path.string() + ": truncated episode payload");
    return ep;
}

long DatasetManifest::total() const {
    long n = 0;
    for (const auto& c : cells) n += c.episodes;
    return n;
}

std::filesystem::path dataset_stats_path(const std::filesystem::path& dir) { return dir / "stats.txt"; }

DatasetManifest build_dataset(const std::filesystem::path& dir, const std::vector<std::string>& embodiment_ids,
                              const std::vector<Task>& tasks, long episodes_per_cell, uint64_t seed) {
    if (embodiment_ids.empty()) throw generation_error("build_dataset: need at least one embodiment");
    if (tasks.empty() || episodes_per_cell < 1) throw generation_error("build_dataset: empty task grid");
    std::filesystem::create_directories(dir);

    DatasetManifest man;
    man.seed = seed;
    man.resolution = kRenderResolution;
    man.steps = kEpisodeSteps;
    ScalingStore store;
    for (const auto& id : embodiment_ids) {
        const SynthEmbodiment& emb = synth_embodiment(id);
        for (Task task : tasks) {
            man.cells.push_back({id, task_name(task), episodes_per_cell});
            for (long e = 0; e < episodes_per_cell; ++e) {
                Rng rng(seed, "data-" + id + "-" + task_name(task) + "-" + std::to_string(e));
                const WorldState world = sample_world(emb, task, rng);
                Rng noise(seed, "noise-" + id + "-" + task_name(task) + "-" + std::to_string(e));
                const Episode ep = scripted_expert(world, noise);
                std::ostringstream name;
                name << id << "_" << task_name(task) << "_" << e << ".bin";
                save_episode(ep, dir / name.str());
                man.files.push_back(name.str());
                fit_rows(store, id, emb.desc.active_slots, ep.states);
                fit_rows(store, action_stats_id(id), emb.desc.action_active_slots, ep.actions);
            }
        }
    }
    store.save(dataset_stats_path(dir));

    std::ofstream f(dir / "manifest.txt");
    if (!f) throw io_error("cannot write manifest in " + dir.string());
    f << kManifestMagic << "\n";
    f << "seed " << man.seed << "\n";
    f << "resolution " << man.resolution << "\n";
    f << "steps " << man.steps << "\n";
    f << "cells " << man.cells.size() << "\n";
    for (const auto& c : man.cells) f << "cell " << c.embodiment_id << " " << c.task << " " << c.episodes << "\n";
    f << "files " << man.files.size() << "\n";
    for (const auto& name : man.files) f << name << "\n";
    if (!f) throw io_error("short manifest write in " + dir.string());
    return man;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.txt");
    if (!f) throw io_error("cannot open manifest in " + dir.string());
    std::string line;
    std::getline(f, line);
    if (line != kManifestMagic) throw io_error(dir.string() + ": unsupported manifest header '" + line + "'");
    DatasetManifest man;
    std::string key;
    size_t n_cells = 0, n_files = 0;
    if (!(f >> key >> man.seed) || key != "seed") throw io_error("manifest: missing seed");
    if (!(f >> key >> man.resolution) || key != "resolution") throw io_error("manifest: missing resolution");
    if (!(f >> key >> man.steps) || key != "steps") throw io_error("manifest: missing steps");
    if (!(f >> key >> n_cells) || key != "cells") throw io_error("manifest: missing cell count");
    for (size_t i = 0; i < n_cells; ++i) {
        DatasetManifest::Cell c;
        if (!(f >> key >> c.embodiment_id >> c.task >> c.episodes) || key != "cell")
            throw io_error("manifest: truncated cell table");
        man.cells.push_back(std::move(c));
    }
    if (!(f >> key >> n_files) || key != "files") throw io_error("manifest: missing file count");
    for (size_t i = 0; i < n_files; ++i) {
        std::string name;
        if (!(f >> name)) throw io_error("manifest: truncated file list");
        man.files.push_back(std::move(name));
    }
    return man;
}

std::pair<double, double> wilson_interval(long successes, long n) {
    if (n <= 0) return {0.0, 1.0};
    constexpr double z = 1.959963984540054;  // 97.5th normal percentile
    const double p = static_cast<double>(successes) / static_cast<double>(n);
    const double z2n = z * z / static_cast<double>(n);
    const double center = (p + z2n / 2.0) / (1.0 + z2n);
    const double half =
        z * std::sqrt(p * (1.0 - p) / static_cast<double>(n) + z2n / (4.0 * static_cast<double>(n))) / (1.0 + z2n);
    // The interval always contains the point estimate; snap the boundary
    // cases so 0/n and n/n report exact endpoints.
    const double lo = successes == 0 ? 0.0 : std::max(0.0, center - half);
    const double hi = successes == n ? 1.0 : std::min(1.0, center + half);
    return {lo, hi};
}

EvalResult evaluate_policy(const RolloutPolicy& policy, const SynthEmbodiment& emb, const std::vector<Task>& tasks,
                           const EvalConfig& cfg) {
    if (tasks.empty()) throw generation_error("evaluate_policy: no tasks");
    if (cfg.exec_horizon < 1 || cfg.exec_horizon > cfg.action_horizon)
        throw layout_error("evaluate_policy: exec horizon outside [1, action horizon]");
    EvalResult res;
    res.episodes = cfg.episodes;
    for (long i = 0; i < cfg.episodes; ++i) {
        const Task task = tasks[static_cast<size_t>(i) % tasks.size()];
        Rng rng(cfg.seed, "eval-" + axis_name(cfg.axis) + "-" + emb.desc.id + "-ep" + std::to_string(i));
        WorldState w = sample_world(emb, task, rng, cfg.axis);
        const std::string prompt = task_prompts(task)[static_cast<size_t>(w.prompt_variant)];

        std::deque<std::vector<double>> states(static_cast<size_t>(cfg.obs_horizon), world_state_row(w));
        std::deque<std::vector<Image>> views(static_cast<size_t>(cfg.obs_horizon), world_views(w));
        SuccessTracker tracker{task};
        tracker.observe(task_error(w));

        std::vector<std::vector<double>> plan;
        for (long step = 0; step < cfg.step_budget; ++step) {
            if (step % cfg.exec_horizon == 0) {
                const std::vector<std::vector<double>> recent_states(states.begin(), states.end());
                const std::vector<std::vector<Image>> recent_views(views.begin(), views.end());
                plan = policy(RolloutContext{w, recent_states, recent_views, prompt});
                if (static_cast<long>(plan.size()) < cfg.exec_horizon)
                    throw layout_error("policy returned " + std::to_string(plan.size()) + " action rows, need " +
                                       std::to_string(cfg.exec_horizon));
            }
            world_apply(w, plan[static_cast<size_t>(step % cfg.exec_horizon)]);
            states.pop_front();
            states.push_back(world_state_row(w));
            views.pop_front();
            views.push_back(world_views(w));
            tracker.observe(task_error(w));
        }
        if (tracker.success()) ++res.successes;
    }
    res.rate = cfg.episodes ? static_cast<double>(res.successes) / static_cast<double>(cfg.episodes) : 0.0;
    std::tie(res.wilson_lo, res.wilson_hi) = wilson_interval(res.successes, res.episodes);
    return res;
}

RolloutPolicy expert_as_policy(long action_horizon) {
    return [action_horizon](const RolloutContext& ctx) {
        WorldState sim = ctx.true_world;
        std::vector<std::vector<double>> rows;
        rows.reserve(static_cast<size_t>(action_horizon));
        for (long t = 0; t < action_horizon; ++t) rows.push_back(world_apply(sim, expert_deltas_core(sim)));
        return rows;
    };
}

RolloutPolicy random_policy(uint64_t seed, long action_horizon, double scale) {
    auto rng = std::make_shared<Rng>(seed, "random-policy");
    return [rng, action_horizon, scale](const RolloutContext& ctx) {
        const long dim = ctx.true_world.emb->desc.action_dim();
        std::vector<std::vector<double>> rows(static_cast<size_t>(action_horizon),
                                              std::vector<double>(static_cast<size_t>(dim)));
        for (auto& row : rows)
            for (double& v : row) v = rng->uniform(-scale, scale);
        return rows;
    };
}

}  // namespace xpolicy
