#include "fan/rft.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fan/errors.hpp"
#include "fan/evalkit.hpp"
#include "fan/metrics.hpp"

namespace fan {

void PpoConfig::validate() const {
    if (!(clip_eps > 0.0) || clip_eps >= 1.0) {
        throw ConfigError("ppo.clip_eps: must be in (0, 1)");
    }
    if (gamma < 0.0 || gamma >= 1.0) {
        throw ConfigError("ppo.gamma: must be in [0, 1)");
    }
    if (gae_lambda < 0.0 || gae_lambda > 1.0) {
        throw ConfigError("ppo.gae_lambda: must be in [0, 1]");
    }
    if (alpha < 0.0) {
        throw ConfigError("ppo.alpha: must be >= 0");
    }
    if (!(sigma > 0.0)) {
        throw ConfigError("ppo.sigma: must be > 0");
    }
    if (traj_per_iter < 1) {
        throw ConfigError("ppo.traj_per_iter: must be >= 1");
    }
    if (epochs < 1) {
        throw ConfigError("ppo.epochs: must be >= 1");
    }
    if (minibatch < 1) {
        throw ConfigError("ppo.minibatch: must be >= 1");
    }
    if (iterations < 0) {
        throw ConfigError("ppo.iterations: must be >= 0");
    }
    if (!(lr_policy > 0.0) || !(lr_value > 0.0)) {
        throw ConfigError("ppo.learning_rate: must be > 0");
    }
    if (entropy_coef < 0.0) {
        throw ConfigError("ppo.entropy_coef: must be >= 0");
    }
    if (eval_episodes < 1) {
        throw ConfigError("ppo.eval_episodes: must be >= 1");
    }
    if (target_kind == TargetKind::LabelSmoothing) {
        throw ConfigError("ppo.target: label-smoothing needs a demonstrated bin; SFT only");
    }
}

std::vector<Trajectory> collect_rollouts(const PolicyModel& policy, const ValueModel& value,
                                         const EnvConfig& env_cfg, const ActionGrid& grid, int n,
                                         std::uint64_t seed, std::uint64_t iteration) {
    if (n < 1) {
        throw ConfigError("rollouts: need at least one episode");
    }
    ToyEnv env(env_cfg);
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int ep = 0; ep < n; ++ep) {
        const Rng env_stream = Rng::derive(seed, {iteration, static_cast<std::uint64_t>(ep), 0});
        Rng action_stream = Rng::derive(seed, {iteration, static_cast<std::uint64_t>(ep), 1});

        Trajectory traj;
        auto [obs, instruction] = env.reset(env_stream);
        traj.instruction = instruction;
        bool done = false;
        while (!done) {
            TrajStep step;
            step.obs = obs;
            const ActionDistribution dist = policy.forward(step.obs, instruction);
            step.action = dist.sample(action_stream);
            step.behavior_log_prob = dist.log_prob(step.action);
            step.value = value.forward(step.obs, instruction);

            const std::vector<double> cont = grid.decode(step.action);
            ToyEnv::StepResult res = env.step(cont);
            step.reward = res.reward;
            step.terminal = res.done;
            done = res.done;
            obs = std::move(res.obs);
            traj.steps.push_back(std::move(step));
        }
        traj.success = env.state().success;
        out.push_back(std::move(traj));
    }
    return out;
}

void compute_gae(Trajectory& traj, double gamma, double lambda) {
    const int n = static_cast<int>(traj.steps.size());
    double gae = 0.0;
    for (int t = n - 1; t >= 0; --t) {
        TrajStep& s = traj.steps[static_cast<std::size_t>(t)];
        const double next_value =
            (t + 1 < n && !s.terminal) ? traj.steps[static_cast<std::size_t>(t + 1)].value : 0.0;
        const double delta = s.reward + gamma * next_value - s.value;
        gae = s.terminal ? delta : delta + gamma * lambda * gae;
        s.advantage = gae;
        s.ret = s.advantage + s.value;
    }
}

ValueLossResult value_loss(const ValueModel& model, std::span<const ValueBatchItem> batch) {
    if (batch.empty()) {
        throw ShapeError("value: empty batch");
    }
    ValueLossResult out;
    out.grad.assign(model.param_count(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const ValueBatchItem& item : batch) {
        const double v = model.forward(*item.obs, item.instruction);
        const double err = v - item.ret;
        out.loss += err * err * inv_n;
        model.backward(*item.obs, item.instruction, 2.0 * err * inv_n, out.grad);
    }
    if (!std::isfinite(out.loss)) {
        throw NumericError("value: non-finite loss");
    }
    return out;
}

namespace {

PolicyLossResult policy_loss_impl(const PolicyModel& model, std::span<const PpoBatchItem> batch,
                                  double clip_eps, double alpha, const TargetSpec* spec,
                                  double entropy_coef, const ActionGrid* grid) {
    if (batch.empty()) {
        throw ShapeError("ppo: empty batch");
    }
    const int dims = model.dims();
    const int bins = model.bins();
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    PolicyLossResult out;
    out.grad.assign(model.param_count(), 0.0);
    std::vector<double> upstream(static_cast<std::size_t>(dims * bins));

    for (std::size_t k = 0; k < batch.size(); ++k) {
        const PpoBatchItem& item = batch[k];
        const ActionDistribution dist = model.forward(*item.obs, item.instruction);
        const double log_prob = dist.log_prob(*item.action);
        const double ratio = std::exp(log_prob - item.behavior_log_prob);
        if (!std::isfinite(ratio)) {
            throw NumericError("ppo: non-finite importance ratio at batch step " + std::to_string(k));
        }
        const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
        const double adv = item.advantage;
        const double obj_unclipped = ratio * adv;
        const double obj_clipped = clipped * adv;
        const bool unclipped_active = obj_unclipped <= obj_clipped;
        const double obj = unclipped_active ? obj_unclipped : obj_clipped;
        out.surrogate -= obj * inv_n;

        // d(-obj)/d log pi = -ratio * adv on the unclipped branch, 0 on the
        // clipped branch; chain through d log pi / d logit = onehot - p.
        const double coef = unclipped_active ? -obj_unclipped * inv_n : 0.0;
        std::fill(upstream.begin(), upstream.end(), 0.0);
        if (coef != 0.0) {
            for (int d = 0; d < dims; ++d) {
                const int a = (*item.action)[static_cast<std::size_t>(d)];
                for (int j = 0; j < bins; ++j) {
                    const std::size_t i = static_cast<std::size_t>(d * bins + j);
                    upstream[i] = -coef * dist.probs[i];
                }
                upstream[static_cast<std::size_t>(d * bins + a)] += coef;
            }
        }

        if (spec != nullptr) {
            const TargetDistribution target = make_regularizer_target(dist, *grid, *spec);
            const double kl = kl_divergence(dist, target);
            out.kl += kl * inv_n;
            if (alpha != 0.0) {
                const std::vector<double> kg = kl_logit_gradient(dist, target);
                for (std::size_t i = 0; i < upstream.size(); ++i) {
                    upstream[i] += alpha * inv_n * kg[i];
                }
                out.loss += alpha * kl * inv_n;
            }
        }
        if (entropy_coef > 0.0) {
            // -coef * H has the same logit gradient as coef * KL(pi || uniform)
            const TargetDistribution uni = uniform_target(dims, bins);
            const std::vector<double> eg = kl_logit_gradient(dist, uni);
            for (std::size_t i = 0; i < upstream.size(); ++i) {
                upstream[i] += entropy_coef * inv_n * eg[i];
            }
            out.loss -= entropy_coef * dist.entropy() * inv_n;
        }

        model.backward(*item.obs, item.instruction, upstream, out.grad);
    }
    out.loss += out.surrogate;
    if (!std::isfinite(out.loss)) {
        throw NumericError("ppo: non-finite loss");
    }
    return out;
}

}  // namespace

PolicyLossResult ppo_loss(const PolicyModel& model, std::span<const PpoBatchItem> batch,
                          double clip_eps) {
    return policy_loss_impl(model, batch, clip_eps, 0.0, nullptr, 0.0, nullptr);
}

PolicyLossResult fan_ppo_loss(const PolicyModel& model, std::span<const PpoBatchItem> batch,
                              const PpoConfig& cfg, const ActionGrid& grid) {
    TargetSpec spec;
    spec.kind = cfg.target_kind;
    spec.sigma = cfg.sigma;
    spec.kappa = cfg.kappa;
    if (cfg.alpha == 0.0 && cfg.entropy_coef == 0.0) {
        return policy_loss_impl(model, batch, cfg.clip_eps, 0.0, nullptr, 0.0, nullptr);
    }
    return policy_loss_impl(model, batch, cfg.clip_eps, cfg.alpha, &spec, cfg.entropy_coef, &grid);
}

PpoReport train_ppo(PolicyModel& policy, ValueModel& value, const EnvConfig& env_cfg,
                    const PpoConfig& cfg, const ActionGrid& grid,
                    const std::string& metrics_path, const std::string& milestones_path) {
    cfg.validate();
    env_cfg.validate();

    std::unique_ptr<CsvFile> csv;
    if (!metrics_path.empty()) {
        csv = std::make_unique<CsvFile>(
            metrics_path,
            std::vector<std::string>{"iteration", "env_steps", "rollout_success", "eval_success",
                                     "mean_kl", "mean_entropy", "policy_loss", "value_loss"});
    }

    TargetSpec metric_spec;
    metric_spec.kind = cfg.target_kind == TargetKind::Entropy ? TargetKind::Entropy : cfg.target_kind;
    metric_spec.sigma = cfg.sigma;
    metric_spec.kappa = cfg.kappa;

    PpoReport report;
    for (double th : {0.5, 0.6, 0.7, 0.8, 0.9}) {
        report.milestones.push_back({th, -1, -1});
    }

    long env_steps = 0;
    std::vector<double> policy_checkpoint = policy.params();
    std::vector<double> value_checkpoint = value.params();

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::vector<Trajectory> trajs = collect_rollouts(policy, value, env_cfg, grid,
                                                         cfg.traj_per_iter, cfg.seed,
                                                         static_cast<std::uint64_t>(iter));
        int successes = 0;
        for (Trajectory& t : trajs) {
            compute_gae(t, cfg.gamma, cfg.gae_lambda);
            env_steps += static_cast<long>(t.steps.size());
            successes += t.success ? 1 : 0;
        }

        std::vector<PpoBatchItem> items;
        std::vector<ValueBatchItem> vitems;
        for (const Trajectory& t : trajs) {
            for (const TrajStep& s : t.steps) {
                items.push_back({&s.obs, t.instruction, &s.action, s.behavior_log_prob, s.advantage});
                vitems.push_back({&s.obs, t.instruction, s.ret});
            }
        }

        if (cfg.normalize_advantages && items.size() > 1) {
            double mean = 0.0;
            for (const PpoBatchItem& it : items) {
                mean += it.advantage;
            }
            mean /= static_cast<double>(items.size());
            double var = 0.0;
            for (const PpoBatchItem& it : items) {
                const double d = it.advantage - mean;
                var += d * d;
            }
            var /= static_cast<double>(items.size());
            const double scale = 1.0 / (std::sqrt(var) + 1e-8);
            for (PpoBatchItem& it : items) {
                it.advantage = (it.advantage - mean) * scale;
            }
        }

        bool diverged = false;
        double policy_loss_sum = 0.0;
        double value_loss_sum = 0.0;
        int policy_batches = 0;
        int value_batches = 0;

        std::vector<std::size_t> order(items.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }

        for (int epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
            Rng shuffle_rng = Rng::derive(cfg.seed, {0xA0, static_cast<std::uint64_t>(iter),
                                                     static_cast<std::uint64_t>(epoch)});
            shuffle_rng.shuffle(std::span<std::size_t>(order));
            std::vector<PpoBatchItem> batch;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(cfg.minibatch)) {
                const std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
                batch.clear();
                for (std::size_t i = start; i < end; ++i) {
                    batch.push_back(items[order[i]]);
                }
                PolicyLossResult step;
                try {
                    step = fan_ppo_loss(policy, batch, cfg, grid);
                } catch (const NumericError&) {
                    diverged = true;
                    break;
                }
                if (std::abs(step.loss) > 1e6) {
                    diverged = true;
                    break;
                }
                std::vector<double>& params = policy.params();
                for (std::size_t i = 0; i < params.size(); ++i) {
                    params[i] -= cfg.lr_policy * step.grad[i];
                }
                policy_loss_sum += step.loss;
                ++policy_batches;
            }
        }

        for (int epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
            Rng shuffle_rng = Rng::derive(cfg.seed, {0xB0, static_cast<std::uint64_t>(iter),
                                                     static_cast<std::uint64_t>(epoch)});
            shuffle_rng.shuffle(std::span<std::size_t>(order));
            std::vector<ValueBatchItem> batch;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(cfg.minibatch)) {
                const std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
                batch.clear();
                for (std::size_t i = start; i < end; ++i) {
                    batch.push_back(vitems[order[i]]);
                }
                ValueLossResult step;
                try {
                    step = value_loss(value, batch);
                } catch (const NumericError&) {
                    diverged = true;
                    break;
                }
                if (step.loss > 1e6) {
                    diverged = true;
                    break;
                }
                std::vector<double>& params = value.params();
                for (std::size_t i = 0; i < params.size(); ++i) {
                    params[i] -= cfg.lr_value * step.grad[i];
                }
                value_loss_sum += step.loss;
                ++value_batches;
            }
        }

        if (diverged) {
            policy.params() = policy_checkpoint;
            value.params() = value_checkpoint;
            report.aborted = true;
            report.abort_reason = "ppo: training diverged at iteration " + std::to_string(iter) +
                                  "; restored the last good checkpoint";
            break;
        }
        policy_checkpoint = policy.params();
        value_checkpoint = value.params();

        // Post-update distribution geometry over this iteration's states.
        double mean_kl = 0.0;
        double mean_entropy = 0.0;
        for (const PpoBatchItem& it : items) {
            const ActionDistribution dist = policy.forward(*it.obs, it.instruction);
            mean_kl += kl_divergence(dist, make_regularizer_target(dist, grid, metric_spec));
            mean_entropy += dist.entropy();
        }
        if (!items.empty()) {
            mean_kl /= static_cast<double>(items.size());
            mean_entropy /= static_cast<double>(items.size());
        }

        PpoIterationStats stats;
        stats.iteration = iter + 1;
        stats.env_steps = env_steps;
        stats.rollout_success = static_cast<double>(successes) / static_cast<double>(trajs.size());
        stats.eval_success =
            evaluate(policy, env_cfg, grid, cfg.eval_episodes,
                     Rng::derive(cfg.seed, {0xE0, static_cast<std::uint64_t>(iter)}).next_u64())
                .success_rate;
        stats.mean_kl = mean_kl;
        stats.mean_entropy = mean_entropy;
        stats.policy_loss = policy_batches > 0 ? policy_loss_sum / policy_batches : 0.0;
        stats.value_loss = value_batches > 0 ? value_loss_sum / value_batches : 0.0;
        report.iterations.push_back(stats);

        for (Milestone& m : report.milestones) {
            if (m.iteration < 0 && stats.eval_success >= m.threshold) {
                m.iteration = stats.iteration;
                m.env_steps = env_steps;
            }
        }

        if (csv) {
            csv->write_row({fmt(stats.iteration), fmt(stats.env_steps), fmt(stats.rollout_success),
                            fmt(stats.eval_success), fmt(stats.mean_kl), fmt(stats.mean_entropy),
                            fmt(stats.policy_loss), fmt(stats.value_loss)});
        }
    }

    if (!milestones_path.empty()) {
        CsvFile mcsv(milestones_path, {"threshold", "iteration", "env_steps"});
        for (const Milestone& m : report.milestones) {
            mcsv.write_row({fmt(m.threshold), fmt(m.iteration), fmt(m.env_steps)});
        }
    }
    return report;
}

}  // namespace fan
