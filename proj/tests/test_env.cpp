#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fan/env.hpp"
#include "fan/errors.hpp"
#include "fan/evalkit.hpp"
#include "fan/rng.hpp"

using namespace fan;

namespace {

double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace

TEST_CASE("reset: clean observation, determinism, separation") {
    EnvConfig cfg;
    ToyEnv env(cfg);

    auto [obs, instruction] = env.reset(Rng(42));
    REQUIRE(static_cast<int>(obs.size()) == cfg.obs_dim());
    const WorldState& st = env.state();
    // noise std 0: the observation equals the internal fields exactly
    CHECK(obs[0] == st.gripper[0]);
    CHECK(obs[1] == st.gripper[1]);
    for (int o = 0; o < cfg.objects; ++o) {
        CHECK(obs[static_cast<std::size_t>(2 + 2 * o)] == st.objects[static_cast<std::size_t>(o)][0]);
        CHECK(obs[static_cast<std::size_t>(3 + 2 * o)] == st.objects[static_cast<std::size_t>(o)][1]);
    }
    // empty slots read zero
    CHECK(obs[6] == 0.0);
    CHECK(obs[7] == 0.0);
    CHECK(obs[8] == 0.0);
    CHECK(obs[9] == 0.0);
    CHECK(obs[10] == 0.0);  // holding flag
    CHECK(obs[11] == st.target[0]);
    CHECK(obs[12] == st.target[1]);
    CHECK(instruction == st.instruction_id);

    // same stream twice: identical resets
    ToyEnv env2(cfg);
    auto [obs2, ins2] = env2.reset(Rng(42));
    CHECK(obs2 == obs);
    CHECK(ins2 == instruction);

    // pairwise separation of gripper, objects, target over many seeds
    const double min_sep = 2.0 * cfg.goal_radius;
    for (int trial = 0; trial < 10000; ++trial) {
        env.reset(Rng::derive(9, {static_cast<std::uint64_t>(trial)}));
        const WorldState& s = env.state();
        std::vector<std::array<double, 2>> pts{s.gripper};
        for (const auto& o : s.objects) {
            pts.push_back(o);
        }
        pts.push_back(s.target);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            for (std::size_t j = i + 1; j < pts.size(); ++j) {
                REQUIRE(dist(pts[i], pts[j]) >= min_sep);
            }
        }
    }
}

TEST_CASE("zero action forever: no reward, done at horizon") {
    EnvConfig cfg;
    cfg.reward = RewardMode::Sparse;
    ToyEnv env(cfg);
    env.reset(Rng(1));
    const std::vector<double> zero{0.0, 0.0, 0.0};
    int steps = 0;
    bool done = false;
    while (!done) {
        const ToyEnv::StepResult r = env.step(zero);
        CHECK(r.reward == 0.0);
        done = r.done;
        ++steps;
    }
    CHECK(steps == cfg.horizon);
    CHECK_FALSE(env.state().success);
}

TEST_CASE("sparse reward totals are 0 or 1 per episode") {
    EnvConfig cfg;
    cfg.reward = RewardMode::Sparse;
    ToyEnv env(cfg);
    Rng arng(5);
    for (int ep = 0; ep < 300; ++ep) {
        env.reset(Rng::derive(17, {static_cast<std::uint64_t>(ep)}));
        double total = 0.0;
        bool done = false;
        while (!done) {
            // blend of random and expert actions so both outcomes occur
            std::vector<double> a = (ep % 2 == 0)
                                        ? env.expert_action()
                                        : std::vector<double>{arng.uniform(-0.2, 0.2),
                                                              arng.uniform(-0.2, 0.2),
                                                              arng.uniform(-1.0, 1.0)};
            const ToyEnv::StepResult r = env.step(a);
            total += r.reward;
            done = r.done;
        }
        CHECK((total == 0.0 || total == 1.0));
        CHECK(total == (env.state().success ? 1.0 : 0.0));
    }
}

TEST_CASE("boundary: release exactly inside the goal radius succeeds") {
    EnvConfig cfg;
    cfg.reward = RewardMode::Sparse;
    ToyEnv env(cfg);
    env.reset(Rng(3));
    WorldState st = env.snapshot();
    st.holding = st.instructed_object;
    st.target = {0.5, 0.5};
    st.gripper = {0.5 + cfg.goal_radius - 1e-9, 0.5};
    st.objects[static_cast<std::size_t>(st.instructed_object)] = st.gripper;
    st.step = 0;
    env.restore(st);
    const ToyEnv::StepResult r = env.step(std::vector<double>{0.0, 0.0, -1.0});
    CHECK(r.reward == 1.0);
    CHECK(r.success);

    // and just outside fails
    env.reset(Rng(3));
    st = env.snapshot();
    st.holding = st.instructed_object;
    st.target = {0.5, 0.5};
    st.gripper = {0.5 + cfg.goal_radius + 1e-9, 0.5};
    st.objects[static_cast<std::size_t>(st.instructed_object)] = st.gripper;
    env.restore(st);
    const ToyEnv::StepResult r2 = env.step(std::vector<double>{0.0, 0.0, -1.0});
    CHECK(r2.reward == 0.0);
    CHECK_FALSE(r2.success);
}

TEST_CASE("dynamics are deterministic given state and action") {
    EnvConfig cfg;
    ToyEnv env(cfg);
    env.reset(Rng(11));
    const WorldState snap = env.snapshot();
    const std::vector<double> a{0.13, -0.07, 1.0};
    env.restore(snap);
    const ToyEnv::StepResult r1 = env.step(a);
    const WorldState s1 = env.snapshot();
    env.restore(snap);
    const ToyEnv::StepResult r2 = env.step(a);
    const WorldState s2 = env.snapshot();
    CHECK(r1.reward == r2.reward);
    CHECK(s1.gripper == s2.gripper);
    CHECK(s1.holding == s2.holding);
    CHECK(s1.step == s2.step);
}

TEST_CASE("expert: at-target release and capped pursuit") {
    EnvConfig cfg;
    ToyEnv env(cfg);
    env.reset(Rng(4));
    WorldState st = env.snapshot();

    // holding at the target: release with a near-zero move
    st.holding = st.instructed_object;
    st.gripper = st.target;
    st.planned_target = st.target;
    st.objects[static_cast<std::size_t>(st.instructed_object)] = st.gripper;
    env.restore(st);
    std::vector<double> a = env.expert_action();
    CHECK(std::abs(a[0]) <= 1e-12);
    CHECK(std::abs(a[1]) <= 1e-12);
    CHECK(a[2] < 0.0);

    // object directly right at three times the cap: full-speed pursuit
    // (normalized command +1), gripper open
    st = env.snapshot();
    st.holding = -1;
    st.gripper = {0.1, 0.5};
    st.objects[static_cast<std::size_t>(st.instructed_object)] = {0.1 + 3.0 * cfg.move_range, 0.5};
    env.restore(st);
    a = env.expert_action();
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(a[2] < 0.0);
}

TEST_CASE("expert succeeds from seeded resets") {
    EnvConfig cfg;
    ToyEnv env(cfg);
    int successes = 0;
    for (int ep = 0; ep < 100; ++ep) {
        env.reset(Rng::derive(7, {static_cast<std::uint64_t>(ep)}));
        bool done = false;
        while (!done) {
            done = env.step(env.expert_action()).done;
        }
        successes += env.state().success ? 1 : 0;
    }
    CHECK(successes >= 99);
}

TEST_CASE("ood variants: config plumbing") {
    EnvConfig base;

    CHECK(ToyEnv::ood_variant(base, OodAxis::VisionWeak).obs_noise_std == 0.01);
    CHECK(ToyEnv::ood_variant(base, OodAxis::VisionStrong).obs_noise_std == 0.03);

    const EnvConfig multi = ToyEnv::ood_variant(base, OodAxis::SemanticMultiObject);
    CHECK(multi.objects == base.objects + 2);
    CHECK(multi.obs_dim() == base.obs_dim());  // slots keep the observation length fixed

    const EnvConfig unseen = ToyEnv::ood_variant(base, OodAxis::SemanticUnseenInstruction);
    REQUIRE(static_cast<int>(unseen.instruction_remap.size()) == base.objects);
    for (int o = 0; o < base.objects; ++o) {
        const int id = unseen.instruction_remap[static_cast<std::size_t>(o)];
        CHECK(id >= base.objects);
        CHECK(id < base.instruction_count());
    }

    CHECK(ToyEnv::ood_variant(base, OodAxis::ExecutionStartPose).start_offset == 0.2);

    const EnvConfig rep = ToyEnv::ood_variant(base, OodAxis::ExecutionReposition);
    CHECK(rep.reposition_step == base.horizon / 2);
    CHECK(rep.reposition_dist == 0.15);

    CHECK_THROWS_AS(parse_ood_axis("no-such-axis"), ConfigError);
}

TEST_CASE("reposition moves the target by exactly the configured distance") {
    const EnvConfig cfg = ToyEnv::ood_variant(EnvConfig{}, OodAxis::ExecutionReposition);
    ToyEnv env(cfg);
    env.reset(Rng(21));
    const std::vector<double> zero{0.0, 0.0, 0.0};
    for (int t = 0; t < cfg.reposition_step; ++t) {
        env.step(zero);
    }
    const std::array<double, 2> before = env.state().target;
    env.step(zero);
    const std::array<double, 2> after = env.state().target;
    CHECK(dist(before, after) == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("start-pose offset displaces the initial gripper by 0.2") {
    EnvConfig base;
    const EnvConfig off = ToyEnv::ood_variant(base, OodAxis::ExecutionStartPose);
    // same stream: the placement draw is identical, then the offset applies
    ToyEnv a(base), b(off);
    a.reset(Rng(33));
    b.reset(Rng(33));
    CHECK(dist(a.state().gripper, b.state().gripper) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("expert success is strictly lower under reposition") {
    EnvConfig base;
    const EnvConfig rep = ToyEnv::ood_variant(base, OodAxis::ExecutionReposition);
    ToyEnv ce(base), re(rep);
    int cs = 0, rs = 0;
    for (int ep = 0; ep < 100; ++ep) {
        ce.reset(Rng::derive(7, {static_cast<std::uint64_t>(ep)}));
        bool done = false;
        while (!done) {
            done = ce.step(ce.expert_action()).done;
        }
        cs += ce.state().success ? 1 : 0;
        re.reset(Rng::derive(7, {static_cast<std::uint64_t>(ep)}));
        done = false;
        while (!done) {
            done = re.step(re.expert_action()).done;
        }
        rs += re.state().success ? 1 : 0;
    }
    CHECK(rs < cs);
}

TEST_CASE("vision noise is reproducible and actually present") {
    const EnvConfig noisy = ToyEnv::ood_variant(EnvConfig{}, OodAxis::VisionWeak);
    ToyEnv a(noisy), b(noisy);
    auto [obs_a, ia] = a.reset(Rng(5));
    auto [obs_b, ib] = b.reset(Rng(5));
    CHECK(obs_a == obs_b);
    CHECK(ia == ib);
    // noisy observation differs from the internal state
    bool differs = false;
    for (std::size_t i = 0; i < 2; ++i) {
        if (obs_a[i] != a.state().gripper[i]) {
            differs = true;
        }
    }
    CHECK(differs);
}

TEST_CASE("one-step Q oracle: determinism, terminal state, capacity") {
    EnvConfig cfg;
    const ActionGrid grid = make_env_grid(cfg, 5);
    ToyEnv env(cfg);
    env.reset(Rng(8));

    const std::vector<double> t1 = env.q_oracle_one_step(grid, 0.99);
    const std::vector<double> t2 = env.q_oracle_one_step(grid, 0.99);
    CHECK(t1 == t2);
    REQUIRE(t1.size() == 125);

    // terminal state: all entries equal
    WorldState st = env.snapshot();
    st.done = true;
    env.restore(st);
    const std::vector<double> done_table = env.q_oracle_one_step(grid, 0.99);
    for (double v : done_table) {
        CHECK(v == done_table[0]);
    }

    const ActionGrid big = make_env_grid(cfg, 30);
    CHECK_THROWS_AS(env.q_oracle_one_step(big, 0.99), CapacityError);
}

TEST_CASE("near a release, tolerant bins share the best Q") {
    // one release away: every (dx, dy, release) bin that keeps the object
    // within the goal radius shares the max Q up to a small gap
    EnvConfig cfg;
    cfg.reward = RewardMode::Sparse;
    const ActionGrid grid = make_env_grid(cfg, 9);
    ToyEnv env(cfg);
    env.reset(Rng(12));
    WorldState st = env.snapshot();
    st.holding = st.instructed_object;
    st.target = {0.5, 0.5};
    st.planned_target = st.target;
    st.gripper = {0.47, 0.5};
    st.objects[static_cast<std::size_t>(st.instructed_object)] = st.gripper;
    st.step = 0;
    env.restore(st);

    const std::vector<double> table = env.q_oracle_one_step(grid, 0.99);
    double qmax = table[0];
    for (double v : table) {
        qmax = std::max(qmax, v);
    }
    int sharing = 0;
    for (int j0 = 0; j0 < 9; ++j0) {
        for (int j1 = 0; j1 < 9; ++j1) {
            for (int j2 = 0; j2 < 9; ++j2) {
                const std::vector<int> joint{j0, j1, j2};
                const std::vector<double> a = grid.decode(joint);
                if (a[2] > 0.0) {
                    continue;  // keeps holding
                }
                const double nx = 0.47 + a[0];
                const double ny = 0.5 + a[1];
                const bool in_goal = std::hypot(nx - 0.5, ny - 0.5) <= cfg.goal_radius;
                const double q = table[static_cast<std::size_t>((j0 * 9 + j1) * 9 + j2)];
                if (in_goal) {
                    CHECK(qmax - q <= 0.05 * qmax);
                    ++sharing;
                }
            }
        }
    }
    CHECK(sharing >= 2);  // the neighborhood is non-trivial
}

TEST_CASE("expert-visited states have non-trivial move-dimension FANs") {
    EnvConfig cfg;
    const ActionGrid grid = make_env_grid(cfg, 9);
    ToyEnv env(cfg);
    int states = 0;
    int with_fan = 0;
    int ep = 0;
    while (states < 40) {
        env.reset(Rng::derive(123, {static_cast<std::uint64_t>(ep++)}));
        bool done = false;
        while (!done && states < 40) {
            const std::vector<FanInterval> fan =
                fan_from_q(env.q_oracle_one_step(grid, 0.99), 3, 9, 0.05);
            ++states;
            if (fan[0].width() >= 2 || fan[1].width() >= 2) {
                ++with_fan;
            }
            done = env.step(env.expert_action()).done;
        }
    }
    CHECK(with_fan * 10 >= states * 9);  // >= 90%
}

TEST_CASE("config validation names the offending field") {
    EnvConfig cfg;
    cfg.horizon = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), "env.horizon: must be >= 1", ConfigError);
    cfg = EnvConfig{};
    cfg.object_slots = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = EnvConfig{};
    cfg.objects = 3;  // slots = 4 cannot absorb +2 distractors
    CHECK_THROWS_AS(ToyEnv::ood_variant(cfg, OodAxis::SemanticMultiObject), ConfigError);

    ToyEnv env{EnvConfig{}};
    env.reset(Rng(1));
    CHECK_THROWS_AS(env.step(std::vector<double>{0.0, 0.0}), ShapeError);
}
