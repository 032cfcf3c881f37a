#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fan/rng.hpp"

namespace fan {

// Factorized categorical distribution over the action grid: one softmax row
// per action dimension. Rows are stored flat, entry (d, j) at d*bins + j.
// log_probs is authoritative; probs = exp(log_probs).
struct ActionDistribution {
    int dims = 0;
    int bins = 0;
    std::vector<double> logits;
    std::vector<double> log_probs;
    std::vector<double> probs;

    static ActionDistribution from_logits(int dims, int bins, std::vector<double> logits);

    // Joint log-probability of a bin-index vector (sum over dimensions).
    double log_prob(std::span<const int> action) const;

    // Joint entropy of the factorized distribution, in nats.
    double entropy() const;

    // Per-dimension argmax; ties break toward the lowest bin index.
    std::vector<int> argmax() const;

    // Independent categorical draw per dimension.
    std::vector<int> sample(Rng& rng) const;

    std::span<const double> probs_row(int d) const;
    std::span<const double> log_probs_row(int d) const;
};

// Feed-forward net over [observation, instruction embedding] with tanh
// hidden layers and a linear output. Parameters live in one flat vector:
// embedding table first, then (W, b) per layer in order. All arithmetic is
// 64-bit; gradients are exact reverse mode.
class FeedForwardNet {
public:
    FeedForwardNet() = default;
    FeedForwardNet(int obs_dim, int instruction_count, int embed_dim,
                   std::vector<int> hidden, int output_dim, std::uint64_t init_seed);

    void forward(std::span<const double> obs, int instruction, std::span<double> out) const;

    // Accumulates d(output . upstream)/dparam into grad, including the
    // embedding row of the instruction used. grad must match param_count().
    void backward(std::span<const double> obs, int instruction,
                  std::span<const double> upstream, std::span<double> grad) const;

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    int obs_dim() const { return obs_dim_; }
    int instruction_count() const { return instruction_count_; }
    int embed_dim() const { return embed_dim_; }
    const std::vector<int>& hidden() const { return hidden_; }
    int output_dim() const { return output_dim_; }
    std::uint64_t init_seed() const { return init_seed_; }

private:
    friend class PolicyModel;
    friend class ValueModel;

    int obs_dim_ = 0;
    int instruction_count_ = 0;
    int embed_dim_ = 0;
    std::vector<int> hidden_;
    int output_dim_ = 0;
    std::uint64_t init_seed_ = 0;
    std::vector<double> params_;

    // Offsets into the flat parameter vector.
    std::size_t embed_offset_ = 0;
    std::vector<std::size_t> weight_offset_;
    std::vector<std::size_t> bias_offset_;
    std::vector<int> layer_in_;
    std::vector<int> layer_out_;

    void build_layout();
    void init_params(std::uint64_t seed);
};

// Policy head: output is dims*bins logits, one softmax row per dimension.
class PolicyModel {
public:
    PolicyModel() = default;
    PolicyModel(int obs_dim, int instruction_count, int embed_dim,
                std::vector<int> hidden, int dims, int bins, std::uint64_t init_seed);

    ActionDistribution forward(std::span<const double> obs, int instruction) const;

    // upstream is a dims*bins gradient on the logits.
    void backward(std::span<const double> obs, int instruction,
                  std::span<const double> upstream, std::span<double> grad) const;

    std::vector<double>& params() { return net_.params(); }
    const std::vector<double>& params() const { return net_.params(); }
    std::size_t param_count() const { return net_.param_count(); }

    int dims() const { return dims_; }
    int bins() const { return bins_; }
    int obs_dim() const { return net_.obs_dim(); }
    int instruction_count() const { return net_.instruction_count(); }
    const FeedForwardNet& net() const { return net_; }

    void save(const std::string& path) const;
    static PolicyModel load(const std::string& path);

private:
    FeedForwardNet net_;
    int dims_ = 0;
    int bins_ = 0;
};

// Scalar value head V(s, l) with its own parameters.
class ValueModel {
public:
    ValueModel() = default;
    ValueModel(int obs_dim, int instruction_count, int embed_dim,
               std::vector<int> hidden, std::uint64_t init_seed);

    double forward(std::span<const double> obs, int instruction) const;
    void backward(std::span<const double> obs, int instruction,
                  double upstream, std::span<double> grad) const;

    std::vector<double>& params() { return net_.params(); }
    const std::vector<double>& params() const { return net_.params(); }
    std::size_t param_count() const { return net_.param_count(); }
    const FeedForwardNet& net() const { return net_; }

    void save(const std::string& path) const;
    static ValueModel load(const std::string& path);

private:
    FeedForwardNet net_;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

// Central-difference audit of an analytic gradient. loss() must be a
// deterministic function of the parameters viewed through `params`; the
// harness perturbs coordinates in place and restores them. Checks at least
// min_coords randomly chosen coordinates (all of them if fewer exist).
// Relative error is |analytic - fd| / max(1, |fd|).
GradCheckResult finite_diff_check(std::span<double> params,
                                  const std::function<double()>& loss,
                                  std::span<const double> analytic_grad,
                                  int min_coords, double step, Rng& rng);

}  // namespace fan
