#include "fan/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fan/config.hpp"
#include "fan/errors.hpp"
#include "fan/fanreg.hpp"
#include "fan/metrics.hpp"
#include "fan/rft.hpp"
#include "fan/sft.hpp"

namespace fan {

namespace {

int row_argmax(std::span<const double> row) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(row.size()); ++j) {
        if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)]) {
            best = j;
        }
    }
    return best;
}

}  // namespace

ShapeMetrics compute_shape_metrics(const ActionDistribution& dist, const ActionGrid& grid,
                                   double target_sigma, double tau) {
    ShapeMetrics m;
    m.entropy.resize(static_cast<std::size_t>(dist.dims));
    m.variance.resize(static_cast<std::size_t>(dist.dims));
    m.mode_bin.resize(static_cast<std::size_t>(dist.dims));
    for (int d = 0; d < dist.dims; ++d) {
        const auto probs = dist.probs_row(d);
        const auto logp = dist.log_probs_row(d);
        double h = 0.0;
        double mean = 0.0;
        for (int j = 0; j < dist.bins; ++j) {
            h -= probs[static_cast<std::size_t>(j)] * logp[static_cast<std::size_t>(j)];
            mean += probs[static_cast<std::size_t>(j)] * grid.bin_center(d, j);
        }
        double var = 0.0;
        for (int j = 0; j < dist.bins; ++j) {
            const double dc = grid.bin_center(d, j) - mean;
            var += probs[static_cast<std::size_t>(j)] * dc * dc;
        }
        m.entropy[static_cast<std::size_t>(d)] = h;
        m.variance[static_cast<std::size_t>(d)] = var;
        m.mode_bin[static_cast<std::size_t>(d)] = row_argmax(probs);
    }
    m.proxy_width = fan_proxy_width(dist, tau);
    TargetSpec spec;
    spec.kind = TargetKind::FixedGaussian;
    spec.sigma = target_sigma;
    m.kl_to_fixed_target = kl_divergence(dist, gaussian_target(dist, grid, spec));
    return m;
}

std::vector<FanInterval> fan_from_q(std::span<const double> q_table, int dims, int bins,
                                    double delta_fraction) {
    if (!(delta_fraction > 0.0) || !(delta_fraction < 1.0)) {
        throw ConfigError("fan_from_q: delta fraction must be in (0, 1)");
    }
    std::size_t expected = 1;
    for (int d = 0; d < dims; ++d) {
        expected *= static_cast<std::size_t>(bins);
    }
    if (q_table.size() != expected) {
        throw ShapeError("fan_from_q: table size does not match bins^dims");
    }

    std::size_t arg = 0;
    double qmax = q_table[0];
    double qmin = q_table[0];
    for (std::size_t i = 1; i < q_table.size(); ++i) {
        if (q_table[i] > qmax) {
            qmax = q_table[i];
            arg = i;
        }
        qmin = std::min(qmin, q_table[i]);
    }

    std::vector<FanInterval> out(static_cast<std::size_t>(dims));
    if (qmax == qmin) {
        for (auto& iv : out) {
            iv = {0, bins - 1, true};
        }
        return out;
    }
    const double delta = delta_fraction * (qmax - qmin);

    // argmax coordinates, dim 0 slowest
    std::vector<int> coords(static_cast<std::size_t>(dims));
    {
        std::size_t rem = arg;
        for (int d = dims - 1; d >= 0; --d) {
            coords[static_cast<std::size_t>(d)] = static_cast<int>(rem % static_cast<std::size_t>(bins));
            rem /= static_cast<std::size_t>(bins);
        }
    }

    for (int d = 0; d < dims; ++d) {
        std::size_t stride = 1;
        for (int k = dims - 1; k > d; --k) {
            stride *= static_cast<std::size_t>(bins);
        }
        const std::size_t base = arg - static_cast<std::size_t>(coords[static_cast<std::size_t>(d)]) * stride;
        auto value_at = [&](int j) { return q_table[base + static_cast<std::size_t>(j) * stride]; };

        int lo = coords[static_cast<std::size_t>(d)];
        int hi = lo;
        while (lo > 0 && qmax - value_at(lo - 1) <= delta) {
            --lo;
        }
        while (hi + 1 < bins && qmax - value_at(hi + 1) <= delta) {
            ++hi;
        }
        out[static_cast<std::size_t>(d)] = {lo, hi, false};
    }
    return out;
}

std::vector<int> fan_proxy_width(const ActionDistribution& dist, double tau) {
    if (!(tau > 0.0) || !(tau < 1.0)) {
        throw ConfigError("fan_proxy_width: tau must be in (0, 1)");
    }
    std::vector<int> widths(static_cast<std::size_t>(dist.dims));
    for (int d = 0; d < dist.dims; ++d) {
        const auto probs = dist.probs_row(d);
        const int mode = row_argmax(probs);
        const double threshold = tau * probs[static_cast<std::size_t>(mode)];
        int lo = mode;
        int hi = mode;
        while (lo > 0 && probs[static_cast<std::size_t>(lo - 1)] >= threshold) {
            --lo;
        }
        while (hi + 1 < dist.bins && probs[static_cast<std::size_t>(hi + 1)] >= threshold) {
            ++hi;
        }
        widths[static_cast<std::size_t>(d)] = hi - lo + 1;
    }
    return widths;
}

EvalResult evaluate(const PolicyModel& model, const EnvConfig& env_cfg, const ActionGrid& grid,
                    int episodes, std::uint64_t seed) {
    if (episodes < 1) {
        throw ConfigError("evaluate: need at least one episode");
    }
    ToyEnv env(env_cfg);
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        auto [obs, instruction] = env.reset(Rng::derive(seed, {static_cast<std::uint64_t>(ep)}));
        bool done = false;
        while (!done) {
            const ActionDistribution dist = model.forward(obs, instruction);
            const std::vector<int> a = dist.argmax();
            ToyEnv::StepResult res = env.step(grid.decode(a));
            done = res.done;
            obs = std::move(res.obs);
        }
        successes += env.state().success ? 1 : 0;
    }
    EvalResult out;
    out.episodes = episodes;
    out.success_rate = static_cast<double>(successes) / static_cast<double>(episodes);
    out.stderr_ = std::sqrt(out.success_rate * (1.0 - out.success_rate) / static_cast<double>(episodes));
    return out;
}

EvalShapeResult evaluate_with_shape(const PolicyModel& model, const EnvConfig& env_cfg,
                                    const ActionGrid& grid, int episodes, std::uint64_t seed) {
    if (episodes < 1) {
        throw ConfigError("evaluate: need at least one episode");
    }
    ToyEnv env(env_cfg);
    EvalShapeResult out;
    int successes = 0;
    double entropy_sum = 0.0;
    double width_sum = 0.0;
    long states = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        auto [obs, instruction] = env.reset(Rng::derive(seed, {static_cast<std::uint64_t>(ep)}));
        bool done = false;
        while (!done) {
            const ActionDistribution dist = model.forward(obs, instruction);
            entropy_sum += dist.entropy();
            const std::vector<int> widths = fan_proxy_width(dist, 0.5);
            for (int w : widths) {
                width_sum += static_cast<double>(w) / static_cast<double>(dist.dims);
            }
            ++states;
            ToyEnv::StepResult res = env.step(grid.decode(dist.argmax()));
            done = res.done;
            obs = std::move(res.obs);
        }
        successes += env.state().success ? 1 : 0;
    }
    out.eval.episodes = episodes;
    out.eval.success_rate = static_cast<double>(successes) / static_cast<double>(episodes);
    out.eval.stderr_ = std::sqrt(out.eval.success_rate * (1.0 - out.eval.success_rate) /
                                 static_cast<double>(episodes));
    out.mean_entropy = states > 0 ? entropy_sum / static_cast<double>(states) : 0.0;
    out.mean_proxy_width = states > 0 ? width_sum / static_cast<double>(states) : 0.0;
    return out;
}

namespace {

EnvConfig variant_env(const EnvConfig& base, const std::string& name) {
    if (name == "canonical") {
        return base;
    }
    return ToyEnv::ood_variant(base, parse_ood_axis(name));
}

struct CellResult {
    double success = 0.0;
    double mean_entropy = 0.0;
    double mean_width = 0.0;
};

}  // namespace

void run_experiment(const RunConfig& cfg) {
    const ActionGrid grid = cfg.make_grid();
    const std::string csv_path = cfg.out_dir + "/experiment.csv";
    CsvFile csv(csv_path, {"method", "seed", "variant", "success", "mean_entropy",
                           "mean_fan_proxy_width", "env_steps_to_80"});

    // (method, variant) -> successes across seeds, in config order
    std::map<std::pair<std::string, std::string>, std::vector<double>> table;
    std::vector<std::string> abort_notes;

    for (const std::string& method : cfg.experiment.methods) {
        const bool is_rft = method == "ppo" || method == "fan-ppo" || method == "entropy-ppo" ||
                            method == "kernel-ppo";
        for (std::uint64_t seed : cfg.experiment.seeds) {
            PolicyModel policy = cfg.make_policy(Rng::derive(seed, {0x1717}).next_u64());
            long steps_to_80 = -1;

            if (is_rft) {
                ValueModel value = cfg.make_value(Rng::derive(seed, {0x7171}).next_u64());
                PpoConfig ppo = cfg.assemble_ppo();
                ppo.seed = seed;
                if (method == "ppo") {
                    ppo.alpha = 0.0;
                } else if (method == "entropy-ppo") {
                    ppo.target_kind = TargetKind::Entropy;
                } else if (method == "kernel-ppo") {
                    ppo.target_kind = TargetKind::KernelSmoothed;
                }
                const PpoReport report = train_ppo(policy, value, cfg.env, ppo, grid, "", "");
                if (report.aborted) {
                    abort_notes.push_back(method + " seed " + std::to_string(seed) + ": " +
                                          report.abort_reason);
                }
                for (const Milestone& m : report.milestones) {
                    if (m.threshold == 0.8) {
                        steps_to_80 = m.env_steps;
                    }
                }
            } else {
                const std::vector<DemoRecord> records =
                    collect_expert_demos(cfg.env, cfg.experiment.demos,
                                         Rng::derive(seed, {0xde30}).next_u64());
                const DemoSet demos = build_demoset(records, cfg.env.obs_dim(), 3, grid);
                SftConfig sft = cfg.assemble_sft();
                sft.seed = seed;
                if (method == "sft") {
                    sft.alpha = 0.0;
                } else if (method == "label-smoothing") {
                    sft.target.kind = TargetKind::LabelSmoothing;
                    if (sft.target.label_eps <= 0.0) {
                        sft.target.label_eps = 0.05;
                    }
                }
                const SftReport report = train_sft(policy, demos, sft, grid, nullptr, "");
                if (report.aborted) {
                    abort_notes.push_back(method + " seed " + std::to_string(seed) + ": " +
                                          report.abort_reason);
                }
            }

            for (std::size_t vi = 0; vi < cfg.experiment.variants.size(); ++vi) {
                const std::string& variant = cfg.experiment.variants[vi];
                const EnvConfig env = variant_env(cfg.env, variant);
                const EvalShapeResult r =
                    evaluate_with_shape(policy, env, grid, cfg.eval.episodes,
                                        Rng::derive(seed, {0xeba1, vi}).next_u64());
                csv.write_row({method, std::to_string(seed), variant, fmt(r.eval.success_rate),
                               fmt(r.mean_entropy), fmt(r.mean_proxy_width), fmt(steps_to_80)});
                table[{method, variant}].push_back(r.eval.success_rate);
            }
            csv.flush();
        }
    }

    // Human-readable summary: one row per method, one column per variant,
    // mean +- std over seeds.
    std::FILE* f = std::fopen((cfg.out_dir + "/summary.txt").c_str(), "w");
    if (!f) {
        throw IoError("experiment: cannot open summary.txt for writing");
    }
    std::fprintf(f, "%-16s", "method");
    for (const std::string& variant : cfg.experiment.variants) {
        std::fprintf(f, " %22s", variant.c_str());
    }
    std::fprintf(f, "\n");
    for (const std::string& method : cfg.experiment.methods) {
        std::fprintf(f, "%-16s", method.c_str());
        for (const std::string& variant : cfg.experiment.variants) {
            const std::vector<double>& xs = table[{method, variant}];
            double mean = 0.0;
            for (double x : xs) {
                mean += x;
            }
            mean /= static_cast<double>(xs.size());
            double var = 0.0;
            for (double x : xs) {
                var += (x - mean) * (x - mean);
            }
            var /= static_cast<double>(xs.size());
            char cell[64];
            std::snprintf(cell, sizeof(cell), "%.3f +- %.3f", mean, std::sqrt(var));
            std::fprintf(f, " %22s", cell);
        }
        std::fprintf(f, "\n");
    }
    if (!abort_notes.empty()) {
        std::fprintf(f, "\naborted cells:\n");
        for (const std::string& note : abort_notes) {
            std::fprintf(f, "  %s\n", note.c_str());
        }
    }
    std::fclose(f);
}

}  // namespace fan
