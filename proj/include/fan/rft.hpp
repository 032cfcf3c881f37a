#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fan/env.hpp"
#include "fan/fanreg.hpp"
#include "fan/grid.hpp"
#include "fan/policy.hpp"

namespace fan {

struct TrajStep {
    std::vector<double> obs;
    std::vector<int> action;
    double behavior_log_prob = 0.0;
    double reward = 0.0;
    double value = 0.0;
    double advantage = 0.0;
    double ret = 0.0;
    bool terminal = false;
};

struct Trajectory {
    int instruction = 0;
    std::vector<TrajStep> steps;
    bool success = false;
};

struct PpoConfig {
    double alpha = 1.0;                              // FAN coefficient
    double sigma = 0.3;                              // fixed target std, action units
    TargetKind target_kind = TargetKind::FixedGaussian;
    double kappa = 0.0;                              // kernel baseline width
    double clip_eps = 0.2;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    int traj_per_iter = 32;
    int epochs = 1;                                  // policy (and value) epochs per iteration
    int minibatch = 256;
    int iterations = 200;
    double lr_policy = 0.05;
    double lr_value = 0.25;
    double entropy_coef = 0.0;
    bool normalize_advantages = true;
    std::uint64_t seed = 0;
    int eval_episodes = 25;

    void validate() const;
};

// Samples n episodes from the current policy. Each episode gets two
// streams derived from (seed, iteration, episode): one drives the
// environment, one drives action sampling, so rollouts are reproducible
// regardless of how episodes are scheduled.
std::vector<Trajectory> collect_rollouts(const PolicyModel& policy, const ValueModel& value,
                                         const EnvConfig& env_cfg, const ActionGrid& grid, int n,
                                         std::uint64_t seed, std::uint64_t iteration);

// GAE with terminal bootstrap 0: delta_t = r_t + gamma V_{t+1} - V_t,
// A_t = sum (gamma lambda)^{i-t} delta_i, return_t = A_t + V_t.
void compute_gae(Trajectory& traj, double gamma, double lambda);

struct ValueBatchItem {
    const std::vector<double>* obs = nullptr;
    int instruction = 0;
    double ret = 0.0;
};

struct ValueLossResult {
    double loss = 0.0;
    std::vector<double> grad;
};

ValueLossResult value_loss(const ValueModel& model, std::span<const ValueBatchItem> batch);

struct PpoBatchItem {
    const std::vector<double>* obs = nullptr;
    int instruction = 0;
    const std::vector<int>* action = nullptr;
    double behavior_log_prob = 0.0;
    double advantage = 0.0;
};

struct PolicyLossResult {
    double loss = 0.0;
    double surrogate = 0.0;  // clipped-surrogate part of the loss
    double kl = 0.0;         // mean KL to the shaping target
    std::vector<double> grad;
};

// Clipped surrogate: -mean min(I A, clip(I, 1-eps, 1+eps) A) with the
// joint importance ratio over the full action vector.
PolicyLossResult ppo_loss(const PolicyModel& model, std::span<const PpoBatchItem> batch,
                          double clip_eps);

// ppo_loss plus alpha * mean KL(pi || target) with the target rebuilt from
// the current policy at every evaluation, plus the optional entropy bonus.
// With alpha = 0 and entropy_coef = 0 this is ppo_loss, bit for bit.
PolicyLossResult fan_ppo_loss(const PolicyModel& model, std::span<const PpoBatchItem> batch,
                              const PpoConfig& cfg, const ActionGrid& grid);

struct PpoIterationStats {
    int iteration = 0;
    long env_steps = 0;
    double rollout_success = 0.0;
    double eval_success = 0.0;
    double mean_kl = 0.0;
    double mean_entropy = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
};

struct Milestone {
    double threshold = 0.0;
    int iteration = -1;  // -1 = never reached
    long env_steps = -1;
};

struct PpoReport {
    std::vector<PpoIterationStats> iterations;
    std::vector<Milestone> milestones;  // greedy-eval success thresholds 0.5 .. 0.9
    bool aborted = false;
    std::string abort_reason;
};

// Full training loop: collect, GAE, normalized advantages, policy and value
// updates, greedy evaluation, metrics CSV and milestone CSV. Trains on
// env_cfg; evaluates greedily on eval_env_cfg (usually the same canonical
// configuration).
PpoReport train_ppo(PolicyModel& policy, ValueModel& value, const EnvConfig& env_cfg,
                    const PpoConfig& cfg, const ActionGrid& grid,
                    const std::string& metrics_path, const std::string& milestones_path);

}  // namespace fan
