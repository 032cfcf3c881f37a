#include "fan/sft.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "fan/errors.hpp"
#include "fan/evalkit.hpp"
#include "fan/metrics.hpp"

namespace fan {

namespace {

constexpr double kNoopMoveEps = 1e-6;

bool is_noop(const std::vector<double>& action, bool prev_closed) {
    const std::size_t d = action.size();
    for (std::size_t i = 0; i + 1 < d; ++i) {
        if (std::abs(action[i]) >= kNoopMoveEps) {
            return false;
        }
    }
    const bool closed = action[d - 1] > 0.0;
    return closed == prev_closed;
}

}  // namespace

std::size_t DemoSet::total_steps() const {
    std::size_t n = 0;
    for (const auto& d : demos) {
        n += d.length();
    }
    return n;
}

void save_demonstrations(const std::string& path, int obs_dim, int action_dims,
                         std::span<const DemoRecord> records) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw IoError("demos: cannot open " + path + " for writing");
    }
    std::fprintf(f, "%d %d\n", obs_dim, action_dims);
    for (const DemoRecord& r : records) {
        std::fprintf(f, "%d %d %d", r.demo_id, r.instruction, r.t);
        for (double v : r.obs) {
            std::fprintf(f, " %.17g", v);
        }
        for (double v : r.action) {
            std::fprintf(f, " %.17g", v);
        }
        std::fputc('\n', f);
    }
    std::fclose(f);
}

DemoSet build_demoset(std::span<const DemoRecord> records, int obs_dim, int action_dims,
                      const ActionGrid& grid) {
    if (action_dims != grid.dims) {
        throw ShapeError("demos: action dimension " + std::to_string(action_dims) +
                         " does not match grid dims " + std::to_string(grid.dims));
    }
    DemoSet set;
    set.obs_dim = obs_dim;
    set.action_dims = action_dims;

    int current_demo = -1;
    bool prev_closed = false;  // gripper starts open
    for (const DemoRecord& r : records) {
        if (static_cast<int>(r.obs.size()) != obs_dim ||
            static_cast<int>(r.action.size()) != action_dims) {
            throw ShapeError("demos: record arity does not match the header");
        }
        if (r.demo_id != current_demo) {
            set.demos.emplace_back();
            set.demos.back().instruction = r.instruction;
            current_demo = r.demo_id;
            prev_closed = false;
        }
        const bool drop = is_noop(r.action, prev_closed);
        prev_closed = r.action.back() > 0.0;
        if (drop) {
            continue;
        }
        set.demos.back().observations.push_back(r.obs);
        set.demos.back().actions.push_back(grid.encode(r.action));
    }

    // A demo whose every step was filtered carries no signal; drop it.
    std::erase_if(set.demos, [](const Demonstration& d) { return d.length() == 0; });
    if (set.demos.empty()) {
        throw ParseError("demos: no usable steps");
    }
    return set;
}

DemoSet load_demonstrations(const std::string& path, const ActionGrid& grid) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("demos: cannot open " + path);
    }

    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("demos: empty file " + path);
    }
    int obs_dim = 0, action_dims = 0;
    {
        std::istringstream header(line);
        if (!(header >> obs_dim >> action_dims) || obs_dim < 1 || action_dims < 1) {
            throw ParseError(path + ":1: bad header, expected 'm D'");
        }
    }

    std::vector<DemoRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        DemoRecord r;
        if (!(ls >> r.demo_id >> r.instruction >> r.t)) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad record prefix");
        }
        r.obs.resize(static_cast<std::size_t>(obs_dim));
        for (double& v : r.obs) {
            if (!(ls >> v)) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": truncated observation");
            }
        }
        r.action.resize(static_cast<std::size_t>(action_dims));
        for (double& v : r.action) {
            if (!(ls >> v)) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": truncated action");
            }
        }
        double extra;
        if (ls >> extra) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": trailing fields");
        }
        records.push_back(std::move(r));
    }
    try {
        return build_demoset(records, obs_dim, action_dims, grid);
    } catch (const ParseError&) {
        throw ParseError("demos: no usable steps in " + path);
    }
}

std::vector<DemoRecord> collect_expert_demos(const EnvConfig& env_cfg, int count,
                                             std::uint64_t seed) {
    if (count < 1) {
        throw ConfigError("demos: need at least one episode");
    }
    ToyEnv env(env_cfg);
    std::vector<DemoRecord> records;
    for (int ep = 0; ep < count; ++ep) {
        auto [obs, instruction] = env.reset(Rng::derive(seed, {static_cast<std::uint64_t>(ep)}));
        int t = 0;
        bool done = false;
        while (!done) {
            DemoRecord r;
            r.demo_id = ep;
            r.instruction = instruction;
            r.t = t;
            r.obs = obs;
            r.action = env.expert_action();
            ToyEnv::StepResult res = env.step(r.action);
            done = res.done;
            obs = std::move(res.obs);
            records.push_back(std::move(r));
            ++t;
        }
    }
    return records;
}

void SftConfig::validate() const {
    if (alpha < 0.0) {
        throw ConfigError("sft.alpha: must be >= 0");
    }
    if (!(learning_rate > 0.0)) {
        throw ConfigError("sft.learning_rate: must be > 0");
    }
    if (batch_size < 1) {
        throw ConfigError("sft.batch_size: must be >= 1");
    }
    if (epochs < 0) {
        throw ConfigError("sft.epochs: must be >= 0");
    }
    if (eval_episodes < 1) {
        throw ConfigError("sft.eval_episodes: must be >= 1");
    }
    target.validate();
}

SftLoss sft_loss(const PolicyModel& model, std::span<const SftBatchItem> batch,
                 double alpha, const TargetSpec& spec, const ActionGrid& grid) {
    if (batch.empty()) {
        throw ShapeError("sft: empty batch");
    }
    const int dims = model.dims();
    const int bins = model.bins();
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    SftLoss out;
    out.grad.assign(model.param_count(), 0.0);
    std::vector<double> upstream(static_cast<std::size_t>(dims * bins));

    for (const SftBatchItem& item : batch) {
        const ActionDistribution dist = model.forward(*item.obs, item.instruction);
        std::fill(upstream.begin(), upstream.end(), 0.0);

        double fit = 0.0;
        if (spec.kind == TargetKind::LabelSmoothing) {
            const double off_mass = spec.label_eps / static_cast<double>(bins - 1);
            for (int d = 0; d < dims; ++d) {
                const int a = (*item.action)[static_cast<std::size_t>(d)];
                grid.check_index(d, a);
                for (int j = 0; j < bins; ++j) {
                    const std::size_t i = static_cast<std::size_t>(d * bins + j);
                    const double t = (j == a) ? (1.0 - spec.label_eps) : off_mass;
                    if (t > 0.0) {
                        fit -= t * dist.log_probs[i];
                    }
                    upstream[i] = dist.probs[i] - t;
                }
            }
        } else {
            fit = -dist.log_prob(*item.action);
            for (int d = 0; d < dims; ++d) {
                const int a = (*item.action)[static_cast<std::size_t>(d)];
                for (int j = 0; j < bins; ++j) {
                    const std::size_t i = static_cast<std::size_t>(d * bins + j);
                    upstream[i] = dist.probs[i];
                }
                upstream[static_cast<std::size_t>(d * bins + a)] -= 1.0;
            }
        }
        out.nll += fit * inv_n;

        double sample_loss = fit;
        if (spec.kind != TargetKind::LabelSmoothing) {
            const TargetDistribution target = make_regularizer_target(dist, grid, spec);
            const double kl = kl_divergence(dist, target);
            out.kl += kl * inv_n;
            if (alpha != 0.0) {
                sample_loss += alpha * kl;
                const std::vector<double> kg = kl_logit_gradient(dist, target);
                for (std::size_t i = 0; i < upstream.size(); ++i) {
                    upstream[i] += alpha * kg[i];
                }
            }
        }
        out.loss += sample_loss * inv_n;

        for (double& v : upstream) {
            v *= inv_n;
        }
        model.backward(*item.obs, item.instruction, upstream, out.grad);
    }

    if (!std::isfinite(out.loss)) {
        throw NumericError("sft: non-finite loss");
    }
    return out;
}

namespace {

struct StepRef {
    int demo = 0;
    int t = 0;
};

SftEpochStats dataset_stats(const PolicyModel& model, const DemoSet& demos,
                            const SftConfig& cfg, const ActionGrid& grid) {
    SftEpochStats stats;
    double n = 0.0;
    for (const Demonstration& demo : demos.demos) {
        for (std::size_t t = 0; t < demo.length(); ++t) {
            const ActionDistribution dist = model.forward(demo.observations[t], demo.instruction);
            const double nll = -dist.log_prob(demo.actions[t]);
            stats.nll += nll;
            stats.entropy += dist.entropy();
            double kl = 0.0;
            if (cfg.target.kind != TargetKind::LabelSmoothing) {
                kl = kl_divergence(dist, make_regularizer_target(dist, grid, cfg.target));
            }
            stats.kl += kl;
            stats.loss += (cfg.target.kind == TargetKind::LabelSmoothing)
                              ? nll  // reporting the plain NLL alongside the smoothed objective
                              : nll + cfg.alpha * kl;
            n += 1.0;
        }
    }
    stats.loss /= n;
    stats.nll /= n;
    stats.kl /= n;
    stats.entropy /= n;
    return stats;
}

}  // namespace

SftReport train_sft(PolicyModel& model, const DemoSet& demos, const SftConfig& cfg,
                    const ActionGrid& grid, const EnvConfig* eval_env,
                    const std::string& metrics_path) {
    cfg.validate();
    if (demos.demos.empty()) {
        throw ConfigError("sft: empty demonstration set");
    }

    std::vector<StepRef> order;
    for (int di = 0; di < static_cast<int>(demos.demos.size()); ++di) {
        for (int t = 0; t < static_cast<int>(demos.demos[static_cast<std::size_t>(di)].length()); ++t) {
            order.push_back({di, t});
        }
    }

    std::unique_ptr<CsvFile> csv;
    if (!metrics_path.empty()) {
        csv = std::make_unique<CsvFile>(
            metrics_path,
            std::vector<std::string>{"epoch", "loss", "nll", "kl", "entropy", "eval_success"});
    }

    SftReport report;
    auto record_epoch = [&](int epoch) {
        SftEpochStats stats = dataset_stats(model, demos, cfg, grid);
        stats.epoch = epoch;
        if (eval_env != nullptr) {
            stats.eval_success =
                evaluate(model, *eval_env, grid, cfg.eval_episodes,
                         Rng::derive(cfg.seed, {0x5e, static_cast<std::uint64_t>(epoch)}).next_u64())
                    .success_rate;
        } else {
            stats.eval_success = std::nan("");
        }
        if (csv) {
            csv->write_row({fmt(stats.epoch), fmt(stats.loss), fmt(stats.nll), fmt(stats.kl),
                            fmt(stats.entropy), fmt(stats.eval_success)});
        }
        report.epochs.push_back(stats);
    };

    record_epoch(0);

    Rng shuffle_rng = Rng::derive(cfg.seed, {0x5f});
    std::vector<double> checkpoint = model.params();
    std::vector<SftBatchItem> batch;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<StepRef>(order));
        bool diverged = false;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) {
                const Demonstration& d = demos.demos[static_cast<std::size_t>(order[i].demo)];
                batch.push_back({&d.observations[static_cast<std::size_t>(order[i].t)], d.instruction,
                                 &d.actions[static_cast<std::size_t>(order[i].t)]});
            }
            SftLoss step;
            try {
                step = sft_loss(model, batch, cfg.alpha, cfg.target, grid);
            } catch (const NumericError&) {
                diverged = true;
                break;
            }
            if (step.loss > 1e6) {
                diverged = true;
                break;
            }
            std::vector<double>& params = model.params();
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= cfg.learning_rate * step.grad[i];
            }
        }
        if (diverged) {
            model.params() = checkpoint;
            report.aborted = true;
            report.abort_reason = "sft: training diverged at epoch " + std::to_string(epoch) +
                                  "; restored the last good checkpoint";
            break;
        }
        checkpoint = model.params();
        record_epoch(epoch);
    }
    return report;
}

}  // namespace fan
