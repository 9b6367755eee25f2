#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "xpolicy/arm.hpp"
#include "xpolicy/prompts.hpp"
#include "xpolicy/rng.hpp"
#include "xpolicy/scaling.hpp"
#include "xpolicy/scene.hpp"

namespace xpolicy {

/// Held-out perturbation families for evaluation.
enum class EvalAxis { InDistribution, ObjectShift, SceneShift };

EvalAxis axis_from_name(const std::string& name);  // "id" | "object" | "scene"
std::string axis_name(EvalAxis axis);

inline constexpr long kEpisodeSteps = 48;         // fixed control steps per demonstration
inline constexpr long kEvalStepBudget = 60;
inline constexpr double kReachTolerance = 0.02;   // workspace units
inline constexpr long kHoldWindow = 10;           // trailing steps that must stay in tolerance
inline constexpr long kRenderResolution = 48;
inline constexpr double kTargetRadius = 0.22;

inline constexpr double kExpertGain = 0.35;       // joint-space proportional gain
inline constexpr double kExpertNoise = 0.002;     // per-joint action noise std
inline constexpr double kJointDeltaCap = 0.35;

/// Action statistics live in the same store as state statistics, under a
/// suffixed embodiment id ('#' cannot appear in real ids): joint-position
/// slots carry angle bounds for states and delta bounds for actions.
std::string action_stats_id(const std::string& embodiment_id);

/// Full simulator state for one rollout.
struct WorldState {
    const SynthEmbodiment* emb = nullptr;
    Task task = Task::Reach;
    long prompt_variant = 0;
    std::vector<double> ql, qr;
    double tx = 0.0, ty = 0.0;       // red target, the left arm's goal
    double t2x = 0.0, t2y = 0.0;     // yellow target, the right arm's goal (bi-reach only)
    double target_radius = kTargetRadius;
    std::vector<Blob> distractors;
    int style = 0;
    std::vector<CameraPose> cameras;
};

/// Samples a solvable episode setup. The axis picks the perturbation family:
/// object-shift swaps in held-out distractor shapes and rescales blob sizes,
/// scene-shift swaps in held-out background styles and jitters camera poses.
WorldState sample_world(const SynthEmbodiment& emb, Task task, Rng& rng, EvalAxis axis = EvalAxis::InDistribution);

Scene world_scene(const WorldState& w);
std::vector<Image> world_views(const WorldState& w);  // rendered and 8-bit quantized

/// Compact raw state row, canonical slot order:
/// [left joints, right joints, left tip xy, right tip xy].
std::vector<double> world_state_row(const WorldState& w);

/// Applies joint deltas [left..., right...] with limit clamping; returns the
/// deltas actually applied.
std::vector<double> world_apply(WorldState& w, const std::vector<double>& deltas);

double left_error(const WorldState& w);
double right_error(const WorldState& w);  // 0 unless the task drives the right arm
double task_error(const WorldState& w);   // max over the arms the task involves

/// Success bookkeeping shared by demonstrations and evaluation: reach-family
/// tasks succeed on any in-tolerance step, hold requires the trailing
/// kHoldWindow steps to stay in tolerance.
struct SuccessTracker {
    Task task = Task::Reach;
    bool reached = false;
    long streak = 0;

    void observe(double err) {
        if (err <= kReachTolerance) {
            reached = true;
            ++streak;
        } else {
            streak = 0;
        }
    }
    bool success() const { return task == Task::Hold ? streak >= kHoldWindow : reached; }
};

/// One scripted-expert control step: proportional joint-space tracking of the
/// closed-form target configurations, per-joint step clamped, plus seeded
/// noise. Converges unconditionally inside the reachable annulus.
std::vector<double> expert_deltas(const WorldState& w, Rng& rng);

struct Episode {
    std::string embodiment_id;
    Task task = Task::Reach;
    long prompt_variant = 0;
    int style = 0;
    bool success = false;
    double target_x = 0.0, target_y = 0.0, target2_x = 0.0, target2_y = 0.0;
    std::vector<std::vector<double>> states;   // kEpisodeSteps+1 rows
    std::vector<std::vector<double>> actions;  // kEpisodeSteps rows, applied deltas
    std::vector<std::vector<Image>> views;     // per state row, camera_count images
};

/// Rolls the scripted expert for kEpisodeSteps from the given setup.
/// Throws generation_error when a target is outside the arm's annulus.
Episode scripted_expert(const WorldState& start, Rng& noise_rng);

void save_episode(const Episode& ep, const std::filesystem::path& path);
Episode load_episode(const std::filesystem::path& path);  // throws io_error

struct DatasetManifest {
    struct Cell {
        std::string embodiment_id;
        std::string task;
        long episodes = 0;
    };
    uint64_t seed = 0;
    long resolution = 0;
    long steps = 0;
    std::vector<Cell> cells;
    std::vector<std::string> files;  // episode filenames, generation order

    long total() const;
};

/// Generates episodes_per_cell expert episodes for every (embodiment, task)
/// pair, writes episode files, the manifest, and scaling statistics fitted
/// over all states and actions (every active slot covered). Bit-reproducible
/// under seed.
DatasetManifest build_dataset(const std::filesystem::path& dir, const std::vector<std::string>& embodiment_ids,
                              const std::vector<Task>& tasks, long episodes_per_cell, uint64_t seed);

DatasetManifest load_manifest(const std::filesystem::path& dir);
std::filesystem::path dataset_stats_path(const std::filesystem::path& dir);

/// What a policy sees at decision time. true_world is for oracle baselines
/// only; learned policies must use the observation fields.
struct RolloutContext {
    const WorldState& true_world;
    const std::vector<std::vector<double>>& recent_states;  // obs_horizon rows, oldest first
    const std::vector<std::vector<Image>>& recent_views;    // obs_horizon x camera_count
    const std::string& prompt;
};

/// Returns action_horizon raw joint-delta rows; the evaluator executes the
/// first exec_horizon of them.
using RolloutPolicy = std::function<std::vector<std::vector<double>>(const RolloutContext&)>;

struct EvalConfig {
    EvalAxis axis = EvalAxis::InDistribution;
    long episodes = 100;
    uint64_t seed = 0;
    long obs_horizon = 2;
    long action_horizon = 16;
    long exec_horizon = 8;
    long step_budget = kEvalStepBudget;
};

struct EvalResult {
    long episodes = 0;
    long successes = 0;
    double rate = 0.0;
    double wilson_lo = 0.0, wilson_hi = 0.0;
};

/// 95% Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(long successes, long n);

/// Closed-loop rollouts: tasks cycle over episodes, each episode's world is
/// drawn from a seed stream disjoint from training data, the policy is
/// queried every exec_horizon steps with the last obs_horizon observations
/// (oldest replicated at episode start).
EvalResult evaluate_policy(const RolloutPolicy& policy, const SynthEmbodiment& emb, const std::vector<Task>& tasks,
                           const EvalConfig& cfg);

/// Oracle baseline: simulates the noiseless expert from the true state.
RolloutPolicy expert_as_policy(long action_horizon);

/// Noise baseline: uniform joint deltas in [-scale, scale].
RolloutPolicy random_policy(uint64_t seed, long action_horizon, double scale);

}  // namespace xpolicy
