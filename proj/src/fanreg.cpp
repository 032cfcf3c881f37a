#include "fan/fanreg.hpp"

#include <algorithm>
#include <cmath>

#include "fan/errors.hpp"

namespace fan {

namespace {

// Normalizes log-weights in place into log-probabilities and fills probs.
void normalize_log_row(std::span<double> log_w, std::span<double> probs) {
    double m = log_w[0];
    for (double v : log_w) {
        m = std::max(m, v);
    }
    double sum = 0.0;
    for (double v : log_w) {
        sum += std::exp(v - m);
    }
    const double lse = m + std::log(sum);
    for (std::size_t j = 0; j < log_w.size(); ++j) {
        log_w[j] -= lse;
        probs[j] = std::exp(log_w[j]);
    }
}

int row_argmax(std::span<const double> row) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(row.size()); ++j) {
        if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)]) {
            best = j;
        }
    }
    return best;
}

void check_match(const ActionDistribution& dist, const TargetDistribution& q) {
    if (dist.dims != q.dims || dist.bins != q.bins) {
        throw ShapeError("fanreg: distribution/target shape mismatch");
    }
}

}  // namespace

TargetKind parse_target_kind(const std::string& name) {
    if (name == "fixed-gaussian") return TargetKind::FixedGaussian;
    if (name == "adaptive-gaussian") return TargetKind::AdaptiveGaussian;
    if (name == "kernel-smoothed") return TargetKind::KernelSmoothed;
    if (name == "label-smoothing") return TargetKind::LabelSmoothing;
    if (name == "entropy") return TargetKind::Entropy;
    throw ConfigError("target.kind: unknown kind '" + name + "'");
}

std::string target_kind_name(TargetKind kind) {
    switch (kind) {
        case TargetKind::FixedGaussian: return "fixed-gaussian";
        case TargetKind::AdaptiveGaussian: return "adaptive-gaussian";
        case TargetKind::KernelSmoothed: return "kernel-smoothed";
        case TargetKind::LabelSmoothing: return "label-smoothing";
        case TargetKind::Entropy: return "entropy";
    }
    throw ConfigError("target.kind: invalid enum value");
}

void TargetSpec::validate() const {
    if (kind == TargetKind::FixedGaussian && !(sigma > 0.0)) {
        throw ConfigError("target.sigma: must be > 0");
    }
    if (kind == TargetKind::AdaptiveGaussian && sigma_min < 0.0) {
        throw ConfigError("target.sigma_min: must be >= 0");
    }
    if (kind == TargetKind::KernelSmoothed && !(kappa > 0.0)) {
        throw ConfigError("target.kappa: must be > 0");
    }
    if (kind == TargetKind::LabelSmoothing && (label_eps < 0.0 || label_eps >= 1.0)) {
        throw ConfigError("target.label_eps: must be in [0, 1)");
    }
}

TargetDistribution gaussian_target(const ActionDistribution& dist, const ActionGrid& grid,
                                   const TargetSpec& spec) {
    if (spec.kind != TargetKind::FixedGaussian && spec.kind != TargetKind::AdaptiveGaussian) {
        throw ConfigError("gaussian_target: spec kind must be fixed- or adaptive-gaussian");
    }
    if (grid.bins < 2) {
        throw ConfigError("gaussian_target: degenerate grid (bins < 2)");
    }
    if (dist.dims != grid.dims || dist.bins != grid.bins) {
        throw ShapeError("gaussian_target: distribution/grid shape mismatch");
    }
    spec.validate();

    TargetDistribution out;
    out.dims = dist.dims;
    out.bins = dist.bins;
    out.q.resize(dist.probs.size());
    out.log_q.resize(dist.probs.size());
    out.mu.resize(static_cast<std::size_t>(dist.dims));

    for (int d = 0; d < dist.dims; ++d) {
        const auto probs = dist.probs_row(d);
        const int mode = row_argmax(probs);
        const double mu = grid.bin_center(d, mode);
        out.mu[static_cast<std::size_t>(d)] = mu;

        double sigma_d = spec.sigma;
        if (spec.kind == TargetKind::AdaptiveGaussian) {
            double var = 0.0;
            for (int j = 0; j < dist.bins; ++j) {
                const double dc = grid.bin_center(d, j) - mu;
                var += probs[static_cast<std::size_t>(j)] * dc * dc;
            }
            const double floor_sigma = (spec.sigma_min > 0.0) ? spec.sigma_min : 0.5 * grid.bin_width(d);
            var = std::max(var, floor_sigma * floor_sigma);
            sigma_d = std::sqrt(var);
        }

        const std::size_t off = static_cast<std::size_t>(d) * static_cast<std::size_t>(dist.bins);
        for (int j = 0; j < dist.bins; ++j) {
            const double dc = grid.bin_center(d, j) - mu;
            out.log_q[off + static_cast<std::size_t>(j)] = -dc * dc / (2.0 * sigma_d * sigma_d);
        }
        normalize_log_row({out.log_q.data() + off, static_cast<std::size_t>(dist.bins)},
                          {out.q.data() + off, static_cast<std::size_t>(dist.bins)});
    }
    return out;
}

TargetDistribution kernel_smoothed_target(const ActionDistribution& dist, const ActionGrid& grid,
                                          double kappa) {
    if (!(kappa > 0.0)) {
        throw ConfigError("target.kappa: must be > 0");
    }
    if (dist.dims != grid.dims || dist.bins != grid.bins) {
        throw ShapeError("kernel_smoothed_target: distribution/grid shape mismatch");
    }

    TargetDistribution out;
    out.dims = dist.dims;
    out.bins = dist.bins;
    out.q.resize(dist.probs.size());
    out.log_q.resize(dist.probs.size());

    for (int d = 0; d < dist.dims; ++d) {
        const auto probs = dist.probs_row(d);
        const std::size_t off = static_cast<std::size_t>(d) * static_cast<std::size_t>(dist.bins);
        double total = 0.0;
        for (int j = 0; j < dist.bins; ++j) {
            const double cj = grid.bin_center(d, j);
            double acc = 0.0;
            for (int j2 = 0; j2 < dist.bins; ++j2) {
                const double dc = cj - grid.bin_center(d, j2);
                acc += std::exp(-dc * dc / (2.0 * kappa * kappa)) * probs[static_cast<std::size_t>(j2)];
            }
            out.q[off + static_cast<std::size_t>(j)] = acc;
            total += acc;
        }
        for (int j = 0; j < dist.bins; ++j) {
            double& v = out.q[off + static_cast<std::size_t>(j)];
            v /= total;
            out.log_q[off + static_cast<std::size_t>(j)] = std::log(v);
        }
    }
    return out;
}

TargetDistribution uniform_target(int dims, int bins) {
    TargetDistribution out;
    out.dims = dims;
    out.bins = bins;
    const std::size_t n = static_cast<std::size_t>(dims) * static_cast<std::size_t>(bins);
    out.q.assign(n, 1.0 / static_cast<double>(bins));
    out.log_q.assign(n, -std::log(static_cast<double>(bins)));
    return out;
}

TargetDistribution label_smoothing_target(const ActionGrid& grid, std::span<const int> demo_bins,
                                          double label_eps) {
    if (label_eps < 0.0 || label_eps >= 1.0) {
        throw ConfigError("target.label_eps: must be in [0, 1)");
    }
    if (static_cast<int>(demo_bins.size()) != grid.dims) {
        throw ShapeError("label_smoothing_target: demonstrated action arity mismatch");
    }
    TargetDistribution out;
    out.dims = grid.dims;
    out.bins = grid.bins;
    const std::size_t n = static_cast<std::size_t>(grid.dims) * static_cast<std::size_t>(grid.bins);
    const double off_mass = label_eps / static_cast<double>(grid.bins - 1);
    out.q.assign(n, off_mass);
    out.log_q.assign(n, 0.0);
    for (int d = 0; d < grid.dims; ++d) {
        const int a = demo_bins[static_cast<std::size_t>(d)];
        grid.check_index(d, a);
        out.q[static_cast<std::size_t>(d * grid.bins + a)] = 1.0 - label_eps;
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.log_q[i] = std::log(out.q[i]);  // -inf for eps = 0; only valid as a CE target
    }
    return out;
}

TargetDistribution make_regularizer_target(const ActionDistribution& dist, const ActionGrid& grid,
                                           const TargetSpec& spec) {
    switch (spec.kind) {
        case TargetKind::FixedGaussian:
        case TargetKind::AdaptiveGaussian:
            return gaussian_target(dist, grid, spec);
        case TargetKind::KernelSmoothed:
            return kernel_smoothed_target(dist, grid, spec.kappa);
        case TargetKind::Entropy:
            return uniform_target(dist.dims, dist.bins);
        case TargetKind::LabelSmoothing:
            throw ConfigError("target.kind: label-smoothing has no demonstrated bin outside SFT");
    }
    throw ConfigError("target.kind: invalid enum value");
}

double kl_divergence(const ActionDistribution& dist, const TargetDistribution& q) {
    check_match(dist, q);
    double kl = 0.0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
        kl += dist.probs[i] * (dist.log_probs[i] - q.log_q[i]);
    }
    return kl;
}

std::vector<double> kl_logit_gradient(const ActionDistribution& dist, const TargetDistribution& q) {
    check_match(dist, q);
    std::vector<double> grad(dist.probs.size());
    for (int d = 0; d < dist.dims; ++d) {
        const std::size_t off = static_cast<std::size_t>(d) * static_cast<std::size_t>(dist.bins);
        double mean_u = 0.0;
        for (int j = 0; j < dist.bins; ++j) {
            const std::size_t i = off + static_cast<std::size_t>(j);
            mean_u += dist.probs[i] * (dist.log_probs[i] - q.log_q[i]);
        }
        for (int j = 0; j < dist.bins; ++j) {
            const std::size_t i = off + static_cast<std::size_t>(j);
            const double u = dist.log_probs[i] - q.log_q[i];
            grad[i] = dist.probs[i] * (u - mean_u);
        }
    }
    return grad;
}

}  // namespace fan
