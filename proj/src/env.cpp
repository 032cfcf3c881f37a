#include "fan/env.hpp"

#include <algorithm>
#include <cmath>

#include "fan/errors.hpp"

namespace fan {

namespace {

double dist2d(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

OodAxis parse_ood_axis(const std::string& name) {
    if (name == "vision-weak") return OodAxis::VisionWeak;
    if (name == "vision-strong") return OodAxis::VisionStrong;
    if (name == "semantic-unseen-instruction") return OodAxis::SemanticUnseenInstruction;
    if (name == "semantic-multi-object") return OodAxis::SemanticMultiObject;
    if (name == "execution-start-pose") return OodAxis::ExecutionStartPose;
    if (name == "execution-reposition") return OodAxis::ExecutionReposition;
    throw ConfigError("env: unknown OOD axis '" + name + "'");
}

std::string ood_axis_name(OodAxis axis) {
    switch (axis) {
        case OodAxis::VisionWeak: return "vision-weak";
        case OodAxis::VisionStrong: return "vision-strong";
        case OodAxis::SemanticUnseenInstruction: return "semantic-unseen-instruction";
        case OodAxis::SemanticMultiObject: return "semantic-multi-object";
        case OodAxis::ExecutionStartPose: return "execution-start-pose";
        case OodAxis::ExecutionReposition: return "execution-reposition";
    }
    throw ConfigError("env: invalid OOD axis value");
}

void EnvConfig::validate() const {
    if (horizon < 1) {
        throw ConfigError("env.horizon: must be >= 1");
    }
    if (objects < 1) {
        throw ConfigError("env.objects: must be >= 1");
    }
    if (object_slots < objects) {
        throw ConfigError("env.object_slots: must be >= env.objects");
    }
    if (!(goal_radius > 0.0)) {
        throw ConfigError("env.goal_radius: must be > 0");
    }
    if (!(grasp_radius > 0.0)) {
        throw ConfigError("env.grasp_radius: must be > 0");
    }
    if (!(move_range > 0.0)) {
        throw ConfigError("env.move_range: must be > 0");
    }
    if (obs_noise_std < 0.0) {
        throw ConfigError("env.obs_noise_std: must be >= 0");
    }
    if (!instruction_remap.empty() && static_cast<int>(instruction_remap.size()) != objects) {
        throw ConfigError("env.instruction_remap: must list one id per object");
    }
}

ToyEnv::ToyEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

std::pair<std::vector<double>, int> ToyEnv::reset(const Rng& episode_stream) {
    noise_rng_ = episode_stream;

    const double min_sep = 2.0 * cfg_.goal_radius;
    const int entities = cfg_.objects + 2;  // gripper + objects + target
    std::vector<std::array<double, 2>> pts(static_cast<std::size_t>(entities));
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        for (auto& p : pts) {
            p = {noise_rng_.uniform(), noise_rng_.uniform()};
        }
        placed = true;
        for (int i = 0; i < entities && placed; ++i) {
            for (int j = i + 1; j < entities; ++j) {
                if (dist2d(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)]) < min_sep) {
                    placed = false;
                    break;
                }
            }
        }
    }
    if (!placed) {
        throw ConfigError("env: could not satisfy pairwise separation after 1000 draws");
    }

    state_ = WorldState{};
    state_.gripper = pts[0];
    state_.objects.assign(pts.begin() + 1, pts.begin() + 1 + cfg_.objects);
    state_.target = pts[static_cast<std::size_t>(entities - 1)];
    state_.holding = -1;
    state_.step = 0;
    state_.done = false;
    state_.success = false;

    if (cfg_.start_offset > 0.0) {
        // Displace by the configured magnitude, split evenly across axes,
        // signed toward the arena interior so the full offset survives.
        const double per_axis = cfg_.start_offset / std::sqrt(2.0);
        for (int axis = 0; axis < 2; ++axis) {
            const double inward = (state_.gripper[static_cast<std::size_t>(axis)] <= 0.5) ? 1.0 : -1.0;
            state_.gripper[static_cast<std::size_t>(axis)] += inward * per_axis;
        }
    }

    state_.planned_target = state_.target;
    state_.instructed_object = noise_rng_.uniform_int(cfg_.objects);
    state_.instruction_id = cfg_.instruction_remap.empty()
                                ? state_.instructed_object
                                : cfg_.instruction_remap[static_cast<std::size_t>(state_.instructed_object)];

    return {observe(), state_.instruction_id};
}

std::vector<double> ToyEnv::observe() {
    std::vector<double> obs;
    obs.reserve(static_cast<std::size_t>(cfg_.obs_dim()));
    obs.push_back(state_.gripper[0]);
    obs.push_back(state_.gripper[1]);
    for (int s = 0; s < cfg_.object_slots; ++s) {
        if (s < static_cast<int>(state_.objects.size())) {
            obs.push_back(state_.objects[static_cast<std::size_t>(s)][0]);
            obs.push_back(state_.objects[static_cast<std::size_t>(s)][1]);
        } else {
            obs.push_back(0.0);
            obs.push_back(0.0);
        }
    }
    obs.push_back(state_.holding >= 0 ? 1.0 : 0.0);
    obs.push_back(state_.target[0]);
    obs.push_back(state_.target[1]);
    if (cfg_.obs_noise_std > 0.0) {
        for (double& v : obs) {
            v += cfg_.obs_noise_std * noise_rng_.normal();
        }
    }
    return obs;
}

double ToyEnv::simulate_step(std::span<const double> action) {
    if (action.size() != 3) {
        throw ShapeError("env: action must have 3 components (dx, dy, g)");
    }
    if (cfg_.reposition_step >= 0 && state_.step == cfg_.reposition_step) {
        // displace the goal directly away from the gripper, exact magnitude;
        // fall back to an inward x-shift when that would leave the arena
        const double vx = state_.target[0] - state_.gripper[0];
        const double vy = state_.target[1] - state_.gripper[1];
        const double norm = std::sqrt(vx * vx + vy * vy);
        bool moved = false;
        if (norm > 1e-12) {
            const double nx = state_.target[0] + cfg_.reposition_dist * vx / norm;
            const double ny = state_.target[1] + cfg_.reposition_dist * vy / norm;
            if (nx >= 0.0 && nx <= 1.0 && ny >= 0.0 && ny <= 1.0) {
                state_.target = {nx, ny};
                moved = true;
            }
        }
        if (!moved) {
            const double inward = (state_.target[0] + cfg_.reposition_dist <= 1.0) ? 1.0 : -1.0;
            state_.target[0] += inward * cfg_.reposition_dist;
        }
    }

    // action components are normalized commands on [-1, 1]; the move
    // channels scale by the configured range, the way a discretized-token
    // policy head maps bins onto robot units
    const double dx = std::clamp(action[0], -1.0, 1.0) * cfg_.move_range;
    const double dy = std::clamp(action[1], -1.0, 1.0) * cfg_.move_range;
    const double g = action[2];

    state_.gripper[0] = std::clamp(state_.gripper[0] + dx, 0.0, 1.0);
    state_.gripper[1] = std::clamp(state_.gripper[1] + dy, 0.0, 1.0);
    if (state_.holding >= 0) {
        state_.objects[static_cast<std::size_t>(state_.holding)] = state_.gripper;
    }

    double reward = 0.0;
    const auto& instructed = state_.objects[static_cast<std::size_t>(state_.instructed_object)];
    if (g > 0.0 && state_.holding < 0) {
        if (dist2d(state_.gripper, instructed) <= cfg_.grasp_radius) {
            state_.holding = state_.instructed_object;
            state_.objects[static_cast<std::size_t>(state_.holding)] = state_.gripper;
        }
    } else if (g <= 0.0 && state_.holding >= 0) {
        const bool was_instructed = state_.holding == state_.instructed_object;
        state_.holding = -1;
        if (was_instructed && dist2d(instructed, state_.target) <= cfg_.goal_radius) {
            reward += 1.0;
            state_.success = true;
            state_.done = true;
        }
    }

    if (cfg_.reward == RewardMode::Shaped) {
        const double d = (state_.holding >= 0) ? dist2d(state_.gripper, state_.target)
                                               : dist2d(state_.gripper, instructed);
        reward -= cfg_.shaping_coef * d;
    }

    state_.step += 1;
    if (state_.step >= cfg_.horizon) {
        state_.done = true;
    }
    return reward;
}

ToyEnv::StepResult ToyEnv::step(std::span<const double> action) {
    if (state_.done) {
        throw ConfigError("env: step called on a finished episode");
    }
    StepResult out;
    out.reward = simulate_step(action);
    out.done = state_.done;
    out.success = state_.success;
    out.obs = observe();
    return out;
}

std::vector<double> ToyEnv::expert_action() const {
    const double cap = cfg_.move_range;
    std::vector<double> a(3, 0.0);
    if (state_.holding < 0) {
        const auto& obj = state_.objects[static_cast<std::size_t>(state_.instructed_object)];
        const double dx = std::clamp(obj[0] - state_.gripper[0], -cap, cap);
        const double dy = std::clamp(obj[1] - state_.gripper[1], -cap, cap);
        const std::array<double, 2> next{state_.gripper[0] + dx, state_.gripper[1] + dy};
        a[0] = dx / cap;
        a[1] = dy / cap;
        a[2] = (dist2d(next, obj) <= cfg_.grasp_radius) ? 1.0 : -1.0;
    } else {
        const std::array<double, 2>& goal = state_.planned_target;
        const double dx = std::clamp(goal[0] - state_.gripper[0], -cap, cap);
        const double dy = std::clamp(goal[1] - state_.gripper[1], -cap, cap);
        const std::array<double, 2> next{state_.gripper[0] + dx, state_.gripper[1] + dy};
        a[0] = dx / cap;
        a[1] = dy / cap;
        a[2] = (dist2d(next, goal) <= 0.9 * cfg_.goal_radius) ? -1.0 : 1.0;
    }
    return a;
}

EnvConfig ToyEnv::ood_variant(const EnvConfig& base, OodAxis axis) {
    EnvConfig out = base;
    switch (axis) {
        case OodAxis::VisionWeak:
            out.obs_noise_std = 0.01;
            break;
        case OodAxis::VisionStrong:
            out.obs_noise_std = 0.03;
            break;
        case OodAxis::SemanticUnseenInstruction:
            out.instruction_remap.resize(static_cast<std::size_t>(base.objects));
            for (int o = 0; o < base.objects; ++o) {
                out.instruction_remap[static_cast<std::size_t>(o)] = base.objects + o;
            }
            break;
        case OodAxis::SemanticMultiObject:
            out.objects = base.objects + 2;
            if (out.objects > out.object_slots) {
                throw ConfigError("env.object_slots: too small for the multi-object variant");
            }
            break;
        case OodAxis::ExecutionStartPose:
            out.start_offset = 0.2;
            break;
        case OodAxis::ExecutionReposition:
            out.reposition_step = base.horizon / 2;
            out.reposition_dist = 0.15;
            break;
    }
    out.validate();
    return out;
}

std::vector<double> ToyEnv::q_oracle_one_step(const ActionGrid& grid, double gamma) const {
    if (grid.dims != 3) {
        throw ShapeError("env: q oracle expects a 3-dimensional grid");
    }
    double combos = 1.0;
    for (int d = 0; d < grid.dims; ++d) {
        combos *= static_cast<double>(grid.bins);
    }
    if (combos > 1e4) {
        throw CapacityError("env: q oracle table would exceed 10^4 entries");
    }

    const int total = static_cast<int>(combos);
    std::vector<double> table(static_cast<std::size_t>(total), 0.0);
    const WorldState start = state_;
    if (start.done) {
        return table;  // episode over: every action is indistinguishable
    }

    ToyEnv sim(cfg_);
    for (int idx = 0; idx < total; ++idx) {
        std::vector<int> joint(3);
        int rem = idx;
        for (int d = 2; d >= 0; --d) {
            joint[static_cast<std::size_t>(d)] = rem % grid.bins;
            rem /= grid.bins;
        }
        sim.restore(start);
        const std::vector<double> first = grid.decode(joint);
        double value = sim.simulate_step(first);
        double discount = gamma;
        while (!sim.state_.done) {
            const std::vector<double> a = sim.expert_action();
            value += discount * sim.simulate_step(a);
            discount *= gamma;
        }
        table[static_cast<std::size_t>(idx)] = value;
    }
    return table;
}

ActionGrid make_env_grid(const EnvConfig& cfg, int bins) {
    cfg.validate();
    return ActionGrid::uniform(3, bins, -1.0, 1.0);
}

}  // namespace fan
