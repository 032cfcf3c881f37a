#pragma once

#include <span>
#include <string>
#include <vector>

#include "fan/grid.hpp"
#include "fan/policy.hpp"

namespace fan {

enum class TargetKind {
    FixedGaussian,     // N(mu(s), sigma^2 I), sigma fixed in action units
    AdaptiveGaussian,  // per-dimension variance from the policy's own spread
    KernelSmoothed,    // Normalize(K_kappa pi)
    LabelSmoothing,    // SFT-only cross-entropy target
    Entropy,           // uniform target; KL(pi || uniform) = log B - H(pi)
};

TargetKind parse_target_kind(const std::string& name);
std::string target_kind_name(TargetKind kind);

struct TargetSpec {
    TargetKind kind = TargetKind::FixedGaussian;
    double sigma = 0.3;      // fixed-gaussian std, action units
    double sigma_min = 0.0;  // adaptive variance floor; 0 means half a bin width
    double kappa = 0.0;      // kernel width, action units
    double label_eps = 0.0;  // label smoothing mass

    void validate() const;
};

// Normalized per-dimension categorical target over the grid bins. Treated
// as a constant with respect to policy parameters everywhere it is used:
// no gradient flows through the mode or the adaptive variance.
struct TargetDistribution {
    int dims = 0;
    int bins = 0;
    std::vector<double> q;      // entry (d, j) at d*bins + j; strictly positive
    std::vector<double> log_q;
    std::vector<double> mu;     // per-dimension mode center, action units (gaussian kinds)

    std::span<const double> row(int d) const {
        return {q.data() + static_cast<std::size_t>(d) * static_cast<std::size_t>(bins),
                static_cast<std::size_t>(bins)};
    }
};

// Discretized Gaussian centered at the policy's own per-dimension mode
// (argmax bin center, ties toward the lowest index). Fixed kind uses
// spec.sigma; adaptive kind uses the policy's spread around the mode with a
// variance floor of max(spec.sigma_min, half bin width)^2.
TargetDistribution gaussian_target(const ActionDistribution& dist, const ActionGrid& grid,
                                   const TargetSpec& spec);

// q = Normalize(K_kappa pi) with K(x, y) = exp(-(x - y)^2 / (2 kappa^2))
// evaluated at bin centers. Preserves multi-modality of pi.
TargetDistribution kernel_smoothed_target(const ActionDistribution& dist, const ActionGrid& grid,
                                          double kappa);

TargetDistribution uniform_target(int dims, int bins);

// (1 - eps) on the demonstrated bin, eps/(B-1) elsewhere. SFT only.
TargetDistribution label_smoothing_target(const ActionGrid& grid, std::span<const int> demo_bins,
                                          double label_eps);

// Dispatch for the RFT-side regularizer targets. LabelSmoothing is
// rejected here: there is no demonstrated bin in an RFT batch.
TargetDistribution make_regularizer_target(const ActionDistribution& dist, const ActionGrid& grid,
                                           const TargetSpec& spec);

// sum_d sum_j p (log p - log q), computed from log-probabilities.
double kl_divergence(const ActionDistribution& dist, const TargetDistribution& q);

// Gradient of kl_divergence on the logits with q held constant:
// grad_k = p_k (u_k - sum_j p_j u_j) per dimension, u = log p - log q.
std::vector<double> kl_logit_gradient(const ActionDistribution& dist, const TargetDistribution& q);

}  // namespace fan
