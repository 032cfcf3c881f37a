#pragma once

#include <array>
#include <string>
#include <vector>

#include "fan/grid.hpp"
#include "fan/rng.hpp"

namespace fan {

enum class RewardMode { Sparse, Shaped };

enum class OodAxis {
    VisionWeak,
    VisionStrong,
    SemanticUnseenInstruction,
    SemanticMultiObject,
    ExecutionStartPose,
    ExecutionReposition,
};

OodAxis parse_ood_axis(const std::string& name);
std::string ood_axis_name(OodAxis axis);

// Instruction-conditioned reach-and-place arena on [0,1]^2. The gripper
// moves by (dx, dy) per step, grasps the instructed object within
// grasp_radius, and succeeds by releasing it within goal_radius of the
// target. Grasp and release tolerances make a contiguous set of move bins
// near-optimal, so the task has a genuine action neighborhood.
struct EnvConfig {
    int horizon = 26;
    int objects = 2;
    int object_slots = 4;       // observation capacity; unused slots read zero
    double goal_radius = 0.12;
    double grasp_radius = 0.20;
    double move_range = 0.1;    // per-axis |dx|, |dy| cap, env units per full command
    RewardMode reward = RewardMode::Shaped;
    double shaping_coef = 0.01;
    double obs_noise_std = 0.0;
    double start_offset = 0.0;       // execution OOD: gripper start displacement magnitude
    int reposition_step = -1;        // execution OOD: step at which the target jumps (<0 off)
    double reposition_dist = 0.0;
    std::vector<int> instruction_remap;  // semantic OOD: object index -> presented id

    void validate() const;

    int obs_dim() const { return 5 + 2 * object_slots; }
    // ids the policy may be shown: the base set plus the held-out aliases
    int instruction_count() const { return 2 * objects; }
};

struct WorldState {
    std::array<double, 2> gripper{0.0, 0.0};
    std::vector<std::array<double, 2>> objects;
    int holding = -1;                   // object index or -1
    std::array<double, 2> target{0.0, 0.0};
    std::array<double, 2> planned_target{0.0, 0.0};  // expert's plan, latched at reset
    int step = 0;
    int instructed_object = 0;
    int instruction_id = 0;             // id presented to the policy
    bool done = false;
    bool success = false;
};

class ToyEnv {
public:
    explicit ToyEnv(EnvConfig cfg);

    // Places gripper, objects, and target by seeded uniform draw with
    // minimum pairwise separation 2 * goal_radius, draws the instruction,
    // and returns the first observation. The stream also drives this
    // episode's observation noise.
    std::pair<std::vector<double>, int> reset(const Rng& episode_stream);

    struct StepResult {
        std::vector<double> obs;
        double reward = 0.0;
        bool done = false;
        bool success = false;
    };

    // action = (dx, dy, g), all normalized to [-1, 1]; the move channels
    // scale by move_range inside the step. g > 0 is close-gripper intent.
    StepResult step(std::span<const double> action);

    std::vector<double> observe();

    const EnvConfig& config() const { return cfg_; }
    const WorldState& state() const { return state_; }

    // Privileged snapshot/restore for the one-step Q oracle.
    WorldState snapshot() const { return state_; }
    void restore(const WorldState& s) { state_ = s; }

    // Scripted proportional controller over the true state: pursue the
    // instructed object, grasp in range, carry, release. Like a motion
    // planner it commits at reset to the target position it saw then, so a
    // mid-episode goal shift makes it place at the stale location.
    std::vector<double> expert_action() const;

    // Derived configuration for one perturbation axis.
    static EnvConfig ood_variant(const EnvConfig& base, OodAxis axis);

    // Discounted return of every joint bin combination: one simulated step
    // from the current state, then the scripted expert to episode end.
    // Requires bins^dims <= 10^4. Row-major over (j0, j1, j2).
    std::vector<double> q_oracle_one_step(const ActionGrid& grid, double gamma) const;

private:
    EnvConfig cfg_;
    WorldState state_;
    Rng noise_rng_{0};

    double simulate_step(std::span<const double> action);  // reward; mutates state_
};

// Action grid matching this environment: every channel is a normalized
// command on [-1, 1], the token-bin convention of discretized action heads.
ActionGrid make_env_grid(const EnvConfig& cfg, int bins);

}  // namespace fan
