#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fan/env.hpp"
#include "fan/grid.hpp"
#include "fan/policy.hpp"

namespace fan {

struct RunConfig;

// Per-dimension distribution geometry. Entropy in nats, variance in action
// units squared, width in bins.
struct ShapeMetrics {
    std::vector<double> entropy;
    std::vector<double> variance;
    std::vector<int> mode_bin;
    std::vector<int> proxy_width;
    double kl_to_fixed_target = 0.0;
};

ShapeMetrics compute_shape_metrics(const ActionDistribution& dist, const ActionGrid& grid,
                                   double target_sigma, double tau = 0.5);

struct FanInterval {
    int lo = 0;
    int hi = 0;  // inclusive
    bool degenerate = false;

    int width() const { return hi - lo + 1; }
};

// Connected delta-level set around the argmax of a one-step Q table, per
// dimension. delta = delta_fraction * (max Q - min Q); each dimension is
// sliced with the other dimensions fixed at the joint argmax. A flat table
// returns full-range intervals flagged degenerate.
std::vector<FanInterval> fan_from_q(std::span<const double> q_table, int dims, int bins,
                                    double delta_fraction);

// Maximal contiguous interval around the per-dimension mode where
// probability >= tau * max probability (half-max width at tau = 0.5).
std::vector<int> fan_proxy_width(const ActionDistribution& dist, double tau = 0.5);

struct EvalResult {
    double success_rate = 0.0;
    double stderr_ = 0.0;
    int episodes = 0;
};

// Greedy-argmax rollout evaluation over seeded resets.
EvalResult evaluate(const PolicyModel& model, const EnvConfig& env_cfg, const ActionGrid& grid,
                    int episodes, std::uint64_t seed);

// evaluate() plus mean per-dimension entropy and proxy width over all
// decision states visited.
struct EvalShapeResult {
    EvalResult eval;
    double mean_entropy = 0.0;
    double mean_proxy_width = 0.0;
};

EvalShapeResult evaluate_with_shape(const PolicyModel& model, const EnvConfig& env_cfg,
                                    const ActionGrid& grid, int episodes, std::uint64_t seed);

// Trains every configured method per seed, evaluates on the canonical
// environment plus the configured OOD variants, and writes the long-format
// results CSV and a human-readable summary table into out_dir.
void run_experiment(const RunConfig& cfg);

}  // namespace fan
