#include "fan/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fan/errors.hpp"
#include "fan/evalkit.hpp"
#include "fan/metrics.hpp"
#include "fan/rft.hpp"
#include "fan/sft.hpp"
#include "fan/tabular.hpp"

namespace fan {

namespace {

void prepare_run_dir(const RunConfig& cfg, const std::string& command) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) {
        throw IoError("run: cannot create output directory " + cfg.out_dir);
    }
    {
        std::ofstream out(cfg.out_dir + "/config.resolved");
        if (!out) {
            throw IoError("run: cannot write resolved config in " + cfg.out_dir);
        }
        out << render_config(cfg);
    }
    {
        std::ofstream out(cfg.out_dir + "/manifest.txt");
        if (!out) {
            throw IoError("run: cannot write manifest in " + cfg.out_dir);
        }
        out << "version " << kArtifactVersion << "\n";
        out << "command " << command << "\n";
        out << "seed " << cfg.seed << "\n";
    }
}

}  // namespace

EnvConfig resolve_variant(const EnvConfig& base, const std::string& name) {
    if (name == "canonical") {
        return base;
    }
    return ToyEnv::ood_variant(base, parse_ood_axis(name));
}

void run_collect_demos(const RunConfig& cfg) {
    cfg.validate();
    prepare_run_dir(cfg, "collect-demos");
    const std::vector<DemoRecord> records =
        collect_expert_demos(cfg.env, cfg.demos.count, Rng::derive(cfg.seed, {0xde30}).next_u64());
    save_demonstrations(cfg.demos.file, cfg.env.obs_dim(), 3, records);
    std::fprintf(stderr, "collect-demos: wrote %zu steps from %d episodes to %s\n",
                 records.size(), cfg.demos.count, cfg.demos.file.c_str());
}

void run_train_sft(const RunConfig& cfg) {
    cfg.validate();
    prepare_run_dir(cfg, "train-sft");
    const ActionGrid grid = cfg.make_grid();
    const DemoSet demos = load_demonstrations(cfg.demos.file, grid);
    PolicyModel policy = cfg.make_policy(Rng::derive(cfg.seed, {0x1717}).next_u64());
    const SftConfig sft = cfg.assemble_sft();
    const SftReport report =
        train_sft(policy, demos, sft, grid, &cfg.env, cfg.out_dir + "/metrics.csv");
    policy.save(cfg.out_dir + "/policy.ckpt");
    if (report.aborted) {
        throw NumericError(report.abort_reason);
    }
    const SftEpochStats& last = report.epochs.back();
    std::fprintf(stderr,
                 "train-sft: %d epochs on %zu steps; final loss %.6f nll %.6f kl %.6f "
                 "eval_success %.3f\n",
                 sft.epochs, demos.total_steps(), last.loss, last.nll, last.kl, last.eval_success);
}

void run_train_ppo(const RunConfig& cfg) {
    cfg.validate();
    prepare_run_dir(cfg, "train-ppo");
    const ActionGrid grid = cfg.make_grid();
    PolicyModel policy = cfg.make_policy(Rng::derive(cfg.seed, {0x1717}).next_u64());
    ValueModel value = cfg.make_value(Rng::derive(cfg.seed, {0x7171}).next_u64());
    const PpoConfig ppo = cfg.assemble_ppo();
    const PpoReport report = train_ppo(policy, value, cfg.env, ppo, grid,
                                       cfg.out_dir + "/metrics.csv",
                                       cfg.out_dir + "/milestones.csv");
    policy.save(cfg.out_dir + "/policy.ckpt");
    value.save(cfg.out_dir + "/value.ckpt");
    if (report.aborted) {
        throw NumericError(report.abort_reason);
    }
    if (!report.iterations.empty()) {
        const PpoIterationStats& last = report.iterations.back();
        std::fprintf(stderr,
                     "train-ppo: %d iterations, %ld env steps; final rollout %.3f eval %.3f "
                     "mean_kl %.4f\n",
                     last.iteration, last.env_steps, last.rollout_success, last.eval_success,
                     last.mean_kl);
    } else {
        std::fprintf(stderr, "train-ppo: 0 iterations requested; model unchanged\n");
    }
}

void run_eval(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.eval.checkpoint.empty()) {
        throw ConfigError("eval.checkpoint: must name a policy checkpoint");
    }
    prepare_run_dir(cfg, "eval");
    const ActionGrid grid = cfg.make_grid();
    const PolicyModel policy = PolicyModel::load(cfg.eval.checkpoint);
    const EnvConfig env = resolve_variant(cfg.env, cfg.eval.variant);
    const EvalResult r = evaluate(policy, env, grid, cfg.eval.episodes,
                                  Rng::derive(cfg.seed, {0xeba1}).next_u64());
    CsvFile csv(cfg.out_dir + "/eval.csv", {"variant", "episodes", "success", "stderr"});
    csv.write_row({cfg.eval.variant, fmt(r.episodes), fmt(r.success_rate), fmt(r.stderr_)});
    std::fprintf(stderr, "eval: variant %s success %.3f +- %.3f over %d episodes\n",
                 cfg.eval.variant.c_str(), r.success_rate, r.stderr_, r.episodes);
}

void run_verify_prop1(const RunConfig& cfg) {
    cfg.validate();
    prepare_run_dir(cfg, "verify-prop1");
    const std::vector<Prop1BatteryRow> rows =
        verify_prop1_battery(cfg.prop1.problems, cfg.seed, cfg.prop1.mesh);

    CsvFile csv(cfg.out_dir + "/prop1.csv",
                {"seed", "beta_star", "tv_distance", "tv_tolerance", "q_vs_advantage_diff",
                 "slackness_residual", "min_policy_entry", "pass"});
    int failures = 0;
    for (const Prop1BatteryRow& row : rows) {
        const Prop1Report& r = row.report;
        csv.write_row({std::to_string(row.seed), fmt(r.beta_star), fmt(r.tv_closed_vs_oracle),
                       fmt(r.tv_tolerance), fmt(r.q_vs_advantage_max_diff),
                       fmt(r.slackness_residual), fmt(r.min_policy_entry),
                       r.pass ? "1" : "0"});
        if (!r.pass) {
            ++failures;
            std::fprintf(stderr, "verify-prop1: FAIL seed %llu: %s\n",
                         static_cast<unsigned long long>(row.seed), r.failure.c_str());
        }
    }
    std::fprintf(stderr, "verify-prop1: %d/%zu problems passed (mesh %.4g)\n",
                 static_cast<int>(rows.size()) - failures, rows.size(), cfg.prop1.mesh);
    if (failures > 0) {
        throw NumericError("verify-prop1: " + std::to_string(failures) + " of " +
                           std::to_string(rows.size()) + " problems failed");
    }
}

void run_experiment_cmd(const RunConfig& cfg) {
    cfg.validate();
    prepare_run_dir(cfg, "experiment");
    run_experiment(cfg);
    std::fprintf(stderr, "experiment: wrote %s/experiment.csv and summary.txt\n",
                 cfg.out_dir.c_str());
}

namespace {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass() const { return max_rel_err <= tolerance; }
};

}  // namespace

void run_gradcheck(const RunConfig& cfg) {
    cfg.validate();
    prepare_run_dir(cfg, "gradcheck");

    const int dims = 2;
    const int bins = 5;
    const int obs_dim = 5;
    const ActionGrid grid = ActionGrid::uniform(dims, bins, -1.0, 1.0);
    PolicyModel policy(obs_dim, 3, 4, {16}, dims, bins, Rng::derive(cfg.seed, {0x6c}).next_u64());
    ValueModel value(obs_dim, 3, 4, {16}, Rng::derive(cfg.seed, {0x6d}).next_u64());

    Rng data_rng = Rng::derive(cfg.seed, {0x6e});
    const int batch_n = 6;
    std::vector<std::vector<double>> obs(batch_n);
    std::vector<int> instr(batch_n);
    std::vector<std::vector<int>> actions(batch_n);
    for (int i = 0; i < batch_n; ++i) {
        obs[static_cast<std::size_t>(i)].resize(obs_dim);
        for (double& v : obs[static_cast<std::size_t>(i)]) {
            v = data_rng.uniform(-1.0, 1.0);
        }
        instr[static_cast<std::size_t>(i)] = data_rng.uniform_int(3);
        actions[static_cast<std::size_t>(i)].resize(dims);
        for (int& a : actions[static_cast<std::size_t>(i)]) {
            a = data_rng.uniform_int(bins);
        }
    }
    std::vector<SftBatchItem> batch;
    for (int i = 0; i < batch_n; ++i) {
        batch.push_back({&obs[static_cast<std::size_t>(i)], instr[static_cast<std::size_t>(i)],
                         &actions[static_cast<std::size_t>(i)]});
    }

    std::vector<GradCheckCase> cases;
    const double step = 1e-5;
    const int coords = 64;

    TargetSpec plain;
    plain.kind = TargetKind::AdaptiveGaussian;

    {  // negative log-likelihood
        auto loss = [&]() { return sft_loss(policy, batch, 0.0, plain, grid).loss; };
        const std::vector<double> analytic = sft_loss(policy, batch, 0.0, plain, grid).grad;
        Rng rng = Rng::derive(cfg.seed, {0x70});
        const GradCheckResult r =
            finite_diff_check(policy.params(), loss, analytic, coords, step, rng);
        cases.push_back({"nll", r.max_rel_err, 1e-5});
    }

    {  // KL regularizer on parameters, target frozen at the center point
        TargetSpec fixed;
        fixed.kind = TargetKind::FixedGaussian;
        fixed.sigma = 0.3;
        std::vector<TargetDistribution> frozen;
        for (int i = 0; i < batch_n; ++i) {
            frozen.push_back(gaussian_target(
                policy.forward(obs[static_cast<std::size_t>(i)], instr[static_cast<std::size_t>(i)]),
                grid, fixed));
        }
        auto loss = [&]() {
            double total = 0.0;
            for (int i = 0; i < batch_n; ++i) {
                total += kl_divergence(policy.forward(obs[static_cast<std::size_t>(i)],
                                                      instr[static_cast<std::size_t>(i)]),
                                       frozen[static_cast<std::size_t>(i)]);
            }
            return total / batch_n;
        };
        std::vector<double> analytic(policy.param_count(), 0.0);
        for (int i = 0; i < batch_n; ++i) {
            const ActionDistribution dist = policy.forward(obs[static_cast<std::size_t>(i)],
                                                           instr[static_cast<std::size_t>(i)]);
            std::vector<double> up = kl_logit_gradient(dist, frozen[static_cast<std::size_t>(i)]);
            for (double& v : up) {
                v /= batch_n;
            }
            policy.backward(obs[static_cast<std::size_t>(i)], instr[static_cast<std::size_t>(i)],
                            up, analytic);
        }
        Rng rng = Rng::derive(cfg.seed, {0x71});
        const GradCheckResult r =
            finite_diff_check(policy.params(), loss, analytic, coords, step, rng);
        cases.push_back({"kl_params", r.max_rel_err, 1e-5});
    }

    {  // KL regularizer directly on logits
        TargetSpec fixed;
        fixed.kind = TargetKind::FixedGaussian;
        fixed.sigma = 0.3;
        std::vector<double> logits(static_cast<std::size_t>(dims * bins));
        Rng lr = Rng::derive(cfg.seed, {0x72});
        for (double& v : logits) {
            v = lr.uniform(-1.0, 1.0);
        }
        const TargetDistribution frozen =
            gaussian_target(ActionDistribution::from_logits(dims, bins, logits), grid, fixed);
        auto loss = [&]() {
            return kl_divergence(ActionDistribution::from_logits(dims, bins, logits), frozen);
        };
        const std::vector<double> analytic =
            kl_logit_gradient(ActionDistribution::from_logits(dims, bins, logits), frozen);
        Rng rng = Rng::derive(cfg.seed, {0x73});
        const GradCheckResult r = finite_diff_check(logits, loss, analytic, coords, step, rng);
        cases.push_back({"kl_logits", r.max_rel_err, 1e-7});
    }

    {  // value mean squared error
        std::vector<ValueBatchItem> vbatch;
        Rng vr = Rng::derive(cfg.seed, {0x74});
        for (int i = 0; i < batch_n; ++i) {
            vbatch.push_back({&obs[static_cast<std::size_t>(i)], instr[static_cast<std::size_t>(i)],
                              vr.uniform(-1.0, 1.0)});
        }
        auto loss = [&]() { return value_loss(value, vbatch).loss; };
        const std::vector<double> analytic = value_loss(value, vbatch).grad;
        Rng rng = Rng::derive(cfg.seed, {0x75});
        const GradCheckResult r =
            finite_diff_check(value.params(), loss, analytic, coords, step, rng);
        cases.push_back({"value_mse", r.max_rel_err, 1e-5});
    }

    // PPO batch: behavior log-probs offset from the current policy so the
    // importance ratios straddle the clip boundaries.
    std::vector<PpoBatchItem> pbatch;
    Rng pr = Rng::derive(cfg.seed, {0x76});
    for (int i = 0; i < batch_n; ++i) {
        const ActionDistribution dist = policy.forward(obs[static_cast<std::size_t>(i)],
                                                       instr[static_cast<std::size_t>(i)]);
        const double lp = dist.log_prob(actions[static_cast<std::size_t>(i)]);
        pbatch.push_back({&obs[static_cast<std::size_t>(i)], instr[static_cast<std::size_t>(i)],
                          &actions[static_cast<std::size_t>(i)], lp - pr.uniform(-0.3, 0.3),
                          pr.uniform(-1.0, 1.0)});
    }

    {  // clipped surrogate
        auto loss = [&]() { return ppo_loss(policy, pbatch, 0.2).loss; };
        const std::vector<double> analytic = ppo_loss(policy, pbatch, 0.2).grad;
        Rng rng = Rng::derive(cfg.seed, {0x77});
        const GradCheckResult r =
            finite_diff_check(policy.params(), loss, analytic, coords, step, rng);
        cases.push_back({"ppo", r.max_rel_err, 1e-4});
    }

    {  // FAN-PPO at the paper defaults
        PpoConfig pc;
        pc.alpha = 1.0;
        pc.sigma = 0.3;
        pc.clip_eps = 0.2;
        auto loss = [&]() { return fan_ppo_loss(policy, pbatch, pc, grid).loss; };
        const std::vector<double> analytic = fan_ppo_loss(policy, pbatch, pc, grid).grad;
        Rng rng = Rng::derive(cfg.seed, {0x78});
        const GradCheckResult r =
            finite_diff_check(policy.params(), loss, analytic, coords, step, rng);
        cases.push_back({"fan_ppo", r.max_rel_err, 1e-4});
    }

    {  // FAN-SFT: adaptive target held fixed while differentiating, as the
       // trainer treats it (a per-step constant)
        TargetSpec adaptive;
        adaptive.kind = TargetKind::AdaptiveGaussian;
        const double alpha = 0.05;
        std::vector<TargetDistribution> frozen;
        for (int i = 0; i < batch_n; ++i) {
            frozen.push_back(gaussian_target(
                policy.forward(obs[static_cast<std::size_t>(i)], instr[static_cast<std::size_t>(i)]),
                grid, adaptive));
        }
        auto loss = [&]() {
            double total = 0.0;
            for (int i = 0; i < batch_n; ++i) {
                const ActionDistribution dist = policy.forward(obs[static_cast<std::size_t>(i)],
                                                               instr[static_cast<std::size_t>(i)]);
                total += -dist.log_prob(actions[static_cast<std::size_t>(i)]) +
                         alpha * kl_divergence(dist, frozen[static_cast<std::size_t>(i)]);
            }
            return total / batch_n;
        };
        const std::vector<double> analytic = sft_loss(policy, batch, alpha, adaptive, grid).grad;
        Rng rng = Rng::derive(cfg.seed, {0x79});
        const GradCheckResult r =
            finite_diff_check(policy.params(), loss, analytic, coords, step, rng);
        cases.push_back({"fan_sft", r.max_rel_err, 1e-4});
    }

    CsvFile csv(cfg.out_dir + "/gradcheck.csv", {"check", "max_rel_err", "tolerance", "pass"});
    int failures = 0;
    for (const GradCheckCase& c : cases) {
        csv.write_row({c.name, fmt(c.max_rel_err), fmt(c.tolerance), c.pass() ? "1" : "0"});
        std::fprintf(stderr, "gradcheck: %-10s max_rel_err %.3e tolerance %.0e %s\n",
                     c.name.c_str(), c.max_rel_err, c.tolerance, c.pass() ? "PASS" : "FAIL");
        failures += c.pass() ? 0 : 1;
    }
    if (failures > 0) {
        throw NumericError("gradcheck: " + std::to_string(failures) + " audits failed");
    }
}

}  // namespace fan
