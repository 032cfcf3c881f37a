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

// One expert episode with actions already snapped to grid bins.
struct Demonstration {
    int instruction = 0;
    std::vector<std::vector<double>> observations;
    std::vector<std::vector<int>> actions;

    std::size_t length() const { return actions.size(); }
};

struct DemoSet {
    int obs_dim = 0;
    int action_dims = 0;
    std::vector<Demonstration> demos;

    std::size_t total_steps() const;
};

// Raw step for writing: continuous actions, as the expert emitted them.
struct DemoRecord {
    int demo_id = 0;
    int instruction = 0;
    int t = 0;
    std::vector<double> obs;
    std::vector<double> action;
};

// Line-oriented text format: a header line "m D", then one step per line,
// "demo_id instruction_id t s_1 .. s_m a_1 .. a_D", decimal, space-separated.
void save_demonstrations(const std::string& path, int obs_dim, int action_dims,
                         std::span<const DemoRecord> records);

// Parses the file, encodes continuous actions to bins, and drops no-op
// steps: near-zero move components with an unchanged gripper intent
// (the last action component is the gripper channel).
DemoSet load_demonstrations(const std::string& path, const ActionGrid& grid);

// Same encoding and no-op filtering as load_demonstrations, from memory.
DemoSet build_demoset(std::span<const DemoRecord> records, int obs_dim, int action_dims,
                      const ActionGrid& grid);

// Rolls the scripted expert for count episodes, recording every
// (observation, continuous action) pair.
std::vector<DemoRecord> collect_expert_demos(const EnvConfig& env_cfg, int count,
                                             std::uint64_t seed);

struct SftConfig {
    double alpha = 0.05;
    double learning_rate = 0.1;
    int batch_size = 64;
    int epochs = 200;
    std::uint64_t seed = 0;
    TargetSpec target{TargetKind::AdaptiveGaussian, 0.3, 0.0, 0.0, 0.0};
    int eval_episodes = 20;

    void validate() const;
};

struct SftBatchItem {
    const std::vector<double>* obs = nullptr;
    int instruction = 0;
    const std::vector<int>* action = nullptr;
};

struct SftLoss {
    double loss = 0.0;
    double nll = 0.0;   // data-fit term (cross-entropy for label smoothing)
    double kl = 0.0;    // mean regularizer value
    std::vector<double> grad;
};

// Mean over the batch of -log pi(a|s,l) + alpha * KL(pi || target), with
// the target rebuilt from the current policy per evaluation and treated as
// a constant in the gradient. TargetKind::LabelSmoothing switches the
// data-fit term to the smoothed cross-entropy and ignores alpha.
SftLoss sft_loss(const PolicyModel& model, std::span<const SftBatchItem> batch,
                 double alpha, const TargetSpec& spec, const ActionGrid& grid);

struct SftEpochStats {
    int epoch = 0;  // 0 is the pre-training snapshot
    double loss = 0.0;
    double nll = 0.0;
    double kl = 0.0;
    double entropy = 0.0;
    double eval_success = 0.0;
};

struct SftReport {
    std::vector<SftEpochStats> epochs;
    bool aborted = false;
    std::string abort_reason;
};

// Minibatch gradient descent with a fixed learning rate. Shuffles
// (demo, timestep) pairs each epoch with the run seed. Writes one CSV row
// per epoch (columns epoch,loss,nll,kl,entropy,eval_success) when
// metrics_path is non-empty; evaluates greedily on eval_env when provided.
// On divergence (non-finite or > 1e6 loss) restores the last epoch's
// parameters and stops.
SftReport train_sft(PolicyModel& model, const DemoSet& demos, const SftConfig& cfg,
                    const ActionGrid& grid, const EnvConfig* eval_env,
                    const std::string& metrics_path);

}  // namespace fan
