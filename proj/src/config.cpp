#include "fan/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "fan/errors.hpp"
#include "fan/metrics.hpp"

namespace fan {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError(key + ": cannot parse '" + value + "' as a number");
    }
    return v;
}

int parse_int(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const long v = std::strtol(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
    }
    return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') {
        throw ConfigError(key + ": cannot parse '" + value + "' as an unsigned integer");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": cannot parse '" + value + "' as a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(value);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

template <typename T>
std::string join_list(const std::vector<T>& items, const std::function<std::string(const T&)>& f) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) {
            out += ",";
        }
        out += f(items[i]);
    }
    return out;
}

struct KeyEntry {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyEntry>& registry() {
    static const std::vector<KeyEntry> entries = [] {
        std::vector<KeyEntry> r;
        auto add = [&r](std::string key, std::function<void(RunConfig&, const std::string&)> set,
                        std::function<std::string(const RunConfig&)> get) {
            r.push_back({std::move(key), std::move(set), std::move(get)});
        };

        add("seed",
            [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); });
        add("out_dir",
            [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; });

        add("grid.bins",
            [](RunConfig& c, const std::string& v) { c.grid.bins = parse_int("grid.bins", v); },
            [](const RunConfig& c) { return fmt(c.grid.bins); });

        add("policy.hidden",
            [](RunConfig& c, const std::string& v) {
                c.policy.hidden.clear();
                for (const std::string& item : split_list(v)) {
                    c.policy.hidden.push_back(parse_int("policy.hidden", item));
                }
            },
            [](const RunConfig& c) {
                return join_list<int>(c.policy.hidden, [](const int& x) { return std::to_string(x); });
            });
        add("policy.embed_dim",
            [](RunConfig& c, const std::string& v) { c.policy.embed_dim = parse_int("policy.embed_dim", v); },
            [](const RunConfig& c) { return fmt(c.policy.embed_dim); });

        add("env.horizon",
            [](RunConfig& c, const std::string& v) { c.env.horizon = parse_int("env.horizon", v); },
            [](const RunConfig& c) { return fmt(c.env.horizon); });
        add("env.objects",
            [](RunConfig& c, const std::string& v) { c.env.objects = parse_int("env.objects", v); },
            [](const RunConfig& c) { return fmt(c.env.objects); });
        add("env.object_slots",
            [](RunConfig& c, const std::string& v) { c.env.object_slots = parse_int("env.object_slots", v); },
            [](const RunConfig& c) { return fmt(c.env.object_slots); });
        add("env.goal_radius",
            [](RunConfig& c, const std::string& v) { c.env.goal_radius = parse_double("env.goal_radius", v); },
            [](const RunConfig& c) { return fmt(c.env.goal_radius); });
        add("env.grasp_radius",
            [](RunConfig& c, const std::string& v) { c.env.grasp_radius = parse_double("env.grasp_radius", v); },
            [](const RunConfig& c) { return fmt(c.env.grasp_radius); });
        add("env.move_range",
            [](RunConfig& c, const std::string& v) { c.env.move_range = parse_double("env.move_range", v); },
            [](const RunConfig& c) { return fmt(c.env.move_range); });
        add("env.obs_noise_std",
            [](RunConfig& c, const std::string& v) { c.env.obs_noise_std = parse_double("env.obs_noise_std", v); },
            [](const RunConfig& c) { return fmt(c.env.obs_noise_std); });
        add("env.start_offset",
            [](RunConfig& c, const std::string& v) { c.env.start_offset = parse_double("env.start_offset", v); },
            [](const RunConfig& c) { return fmt(c.env.start_offset); });
        add("env.reposition_step",
            [](RunConfig& c, const std::string& v) { c.env.reposition_step = parse_int("env.reposition_step", v); },
            [](const RunConfig& c) { return fmt(c.env.reposition_step); });
        add("env.reposition_dist",
            [](RunConfig& c, const std::string& v) { c.env.reposition_dist = parse_double("env.reposition_dist", v); },
            [](const RunConfig& c) { return fmt(c.env.reposition_dist); });
        add("env.reward",
            [](RunConfig& c, const std::string& v) {
                if (v == "sparse") {
                    c.env.reward = RewardMode::Sparse;
                } else if (v == "shaped") {
                    c.env.reward = RewardMode::Shaped;
                } else {
                    throw ConfigError("env.reward: expected 'sparse' or 'shaped', got '" + v + "'");
                }
            },
            [](const RunConfig& c) {
                return c.env.reward == RewardMode::Sparse ? std::string("sparse") : std::string("shaped");
            });
        add("env.shaping_coef",
            [](RunConfig& c, const std::string& v) { c.env.shaping_coef = parse_double("env.shaping_coef", v); },
            [](const RunConfig& c) { return fmt(c.env.shaping_coef); });

        add("target.kind",
            [](RunConfig& c, const std::string& v) { c.target.kind = parse_target_kind(v); },
            [](const RunConfig& c) { return target_kind_name(c.target.kind); });
        add("target.sigma",
            [](RunConfig& c, const std::string& v) { c.target.sigma = parse_double("target.sigma", v); },
            [](const RunConfig& c) { return fmt(c.target.sigma); });
        add("target.sigma_min",
            [](RunConfig& c, const std::string& v) { c.target.sigma_min = parse_double("target.sigma_min", v); },
            [](const RunConfig& c) { return fmt(c.target.sigma_min); });
        add("target.kappa",
            [](RunConfig& c, const std::string& v) { c.target.kappa = parse_double("target.kappa", v); },
            [](const RunConfig& c) { return fmt(c.target.kappa); });
        add("target.label_eps",
            [](RunConfig& c, const std::string& v) { c.target.label_eps = parse_double("target.label_eps", v); },
            [](const RunConfig& c) { return fmt(c.target.label_eps); });

        add("sft.target_kind",
            [](RunConfig& c, const std::string& v) {
                parse_target_kind(v);  // validate the name
                c.sft_target_kind = v;
            },
            [](const RunConfig& c) { return c.sft_target_kind; });
        add("sft.alpha",
            [](RunConfig& c, const std::string& v) { c.sft.alpha = parse_double("sft.alpha", v); },
            [](const RunConfig& c) { return fmt(c.sft.alpha); });
        add("sft.learning_rate",
            [](RunConfig& c, const std::string& v) { c.sft.learning_rate = parse_double("sft.learning_rate", v); },
            [](const RunConfig& c) { return fmt(c.sft.learning_rate); });
        add("sft.batch_size",
            [](RunConfig& c, const std::string& v) { c.sft.batch_size = parse_int("sft.batch_size", v); },
            [](const RunConfig& c) { return fmt(c.sft.batch_size); });
        add("sft.epochs",
            [](RunConfig& c, const std::string& v) { c.sft.epochs = parse_int("sft.epochs", v); },
            [](const RunConfig& c) { return fmt(c.sft.epochs); });
        add("sft.eval_episodes",
            [](RunConfig& c, const std::string& v) { c.sft.eval_episodes = parse_int("sft.eval_episodes", v); },
            [](const RunConfig& c) { return fmt(c.sft.eval_episodes); });

        add("ppo.alpha",
            [](RunConfig& c, const std::string& v) { c.ppo.alpha = parse_double("ppo.alpha", v); },
            [](const RunConfig& c) { return fmt(c.ppo.alpha); });
        add("ppo.clip",
            [](RunConfig& c, const std::string& v) { c.ppo.clip_eps = parse_double("ppo.clip", v); },
            [](const RunConfig& c) { return fmt(c.ppo.clip_eps); });
        add("ppo.gamma",
            [](RunConfig& c, const std::string& v) { c.ppo.gamma = parse_double("ppo.gamma", v); },
            [](const RunConfig& c) { return fmt(c.ppo.gamma); });
        add("ppo.lambda",
            [](RunConfig& c, const std::string& v) { c.ppo.gae_lambda = parse_double("ppo.lambda", v); },
            [](const RunConfig& c) { return fmt(c.ppo.gae_lambda); });
        add("ppo.traj_per_iter",
            [](RunConfig& c, const std::string& v) { c.ppo.traj_per_iter = parse_int("ppo.traj_per_iter", v); },
            [](const RunConfig& c) { return fmt(c.ppo.traj_per_iter); });
        add("ppo.epochs",
            [](RunConfig& c, const std::string& v) { c.ppo.epochs = parse_int("ppo.epochs", v); },
            [](const RunConfig& c) { return fmt(c.ppo.epochs); });
        add("ppo.minibatch",
            [](RunConfig& c, const std::string& v) { c.ppo.minibatch = parse_int("ppo.minibatch", v); },
            [](const RunConfig& c) { return fmt(c.ppo.minibatch); });
        add("ppo.iterations",
            [](RunConfig& c, const std::string& v) { c.ppo.iterations = parse_int("ppo.iterations", v); },
            [](const RunConfig& c) { return fmt(c.ppo.iterations); });
        add("ppo.lr_policy",
            [](RunConfig& c, const std::string& v) { c.ppo.lr_policy = parse_double("ppo.lr_policy", v); },
            [](const RunConfig& c) { return fmt(c.ppo.lr_policy); });
        add("ppo.lr_value",
            [](RunConfig& c, const std::string& v) { c.ppo.lr_value = parse_double("ppo.lr_value", v); },
            [](const RunConfig& c) { return fmt(c.ppo.lr_value); });
        add("ppo.entropy_coef",
            [](RunConfig& c, const std::string& v) { c.ppo.entropy_coef = parse_double("ppo.entropy_coef", v); },
            [](const RunConfig& c) { return fmt(c.ppo.entropy_coef); });
        add("ppo.normalize_advantages",
            [](RunConfig& c, const std::string& v) {
                c.ppo.normalize_advantages = parse_bool("ppo.normalize_advantages", v);
            },
            [](const RunConfig& c) { return c.ppo.normalize_advantages ? "true" : "false"; });
        add("ppo.eval_episodes",
            [](RunConfig& c, const std::string& v) { c.ppo.eval_episodes = parse_int("ppo.eval_episodes", v); },
            [](const RunConfig& c) { return fmt(c.ppo.eval_episodes); });

        add("eval.episodes",
            [](RunConfig& c, const std::string& v) { c.eval.episodes = parse_int("eval.episodes", v); },
            [](const RunConfig& c) { return fmt(c.eval.episodes); });
        add("eval.variant",
            [](RunConfig& c, const std::string& v) { c.eval.variant = v; },
            [](const RunConfig& c) { return c.eval.variant; });
        add("eval.checkpoint",
            [](RunConfig& c, const std::string& v) { c.eval.checkpoint = v; },
            [](const RunConfig& c) { return c.eval.checkpoint; });

        add("demos.file",
            [](RunConfig& c, const std::string& v) { c.demos.file = v; },
            [](const RunConfig& c) { return c.demos.file; });
        add("demos.count",
            [](RunConfig& c, const std::string& v) { c.demos.count = parse_int("demos.count", v); },
            [](const RunConfig& c) { return fmt(c.demos.count); });

        add("experiment.methods",
            [](RunConfig& c, const std::string& v) { c.experiment.methods = split_list(v); },
            [](const RunConfig& c) {
                return join_list<std::string>(c.experiment.methods,
                                              [](const std::string& s) { return s; });
            });
        add("experiment.seeds",
            [](RunConfig& c, const std::string& v) {
                c.experiment.seeds.clear();
                for (const std::string& item : split_list(v)) {
                    c.experiment.seeds.push_back(parse_u64("experiment.seeds", item));
                }
            },
            [](const RunConfig& c) {
                return join_list<std::uint64_t>(c.experiment.seeds, [](const std::uint64_t& s) {
                    return std::to_string(s);
                });
            });
        add("experiment.variants",
            [](RunConfig& c, const std::string& v) { c.experiment.variants = split_list(v); },
            [](const RunConfig& c) {
                return join_list<std::string>(c.experiment.variants,
                                              [](const std::string& s) { return s; });
            });
        add("experiment.demos",
            [](RunConfig& c, const std::string& v) { c.experiment.demos = parse_int("experiment.demos", v); },
            [](const RunConfig& c) { return fmt(c.experiment.demos); });

        add("prop1.problems",
            [](RunConfig& c, const std::string& v) { c.prop1.problems = parse_int("prop1.problems", v); },
            [](const RunConfig& c) { return fmt(c.prop1.problems); });
        add("prop1.mesh",
            [](RunConfig& c, const std::string& v) { c.prop1.mesh = parse_double("prop1.mesh", v); },
            [](const RunConfig& c) { return fmt(c.prop1.mesh); });

        return r;
    }();
    return entries;
}

const KeyEntry* find_key(const std::string& key) {
    for (const KeyEntry& e : registry()) {
        if (e.key == key) {
            return &e;
        }
    }
    return nullptr;
}

}  // namespace

void GridConfig::validate() const {
    if (bins < 2) {
        throw ConfigError("grid.bins: must be >= 2");
    }
}

void PolicyConfig::validate() const {
    if (hidden.empty()) {
        throw ConfigError("policy.hidden: need at least one hidden layer");
    }
    for (int h : hidden) {
        if (h < 1) {
            throw ConfigError("policy.hidden: layer sizes must be >= 1");
        }
    }
    if (embed_dim < 1) {
        throw ConfigError("policy.embed_dim: must be >= 1");
    }
}

void EvalSectionConfig::validate() const {
    if (episodes < 1) {
        throw ConfigError("eval.episodes: must be >= 1");
    }
    if (variant != "canonical") {
        parse_ood_axis(variant);  // throws on unknown names
    }
}

void DemoSectionConfig::validate() const {
    if (file.empty()) {
        throw ConfigError("demos.file: must not be empty");
    }
    if (count < 1) {
        throw ConfigError("demos.count: must be >= 1");
    }
}

void ExperimentConfig::validate() const {
    static const std::vector<std::string> known{"sft",       "fan-sft", "label-smoothing", "ppo",
                                                "fan-ppo",   "entropy-ppo", "kernel-ppo"};
    if (methods.empty()) {
        throw ConfigError("experiment.methods: must not be empty");
    }
    for (const std::string& m : methods) {
        if (std::find(known.begin(), known.end(), m) == known.end()) {
            throw ConfigError("experiment.methods: unknown method '" + m + "'");
        }
    }
    if (seeds.empty()) {
        throw ConfigError("experiment.seeds: must not be empty");
    }
    if (variants.empty()) {
        throw ConfigError("experiment.variants: must not be empty");
    }
    for (const std::string& v : variants) {
        if (v != "canonical") {
            parse_ood_axis(v);
        }
    }
    if (demos < 1) {
        throw ConfigError("experiment.demos: must be >= 1");
    }
}

void Prop1Config::validate() const {
    if (problems < 1) {
        throw ConfigError("prop1.problems: must be >= 1");
    }
    if (!(mesh > 0.0) || mesh > 0.002) {
        throw ConfigError("prop1.mesh: must be in (0, 0.002]");
    }
}

void RunConfig::validate() const {
    if (out_dir.empty()) {
        throw ConfigError("out_dir: must not be empty");
    }
    grid.validate();
    policy.validate();
    env.validate();
    target.validate();
    parse_target_kind(sft_target_kind);
    assemble_sft().validate();
    assemble_ppo().validate();
    eval.validate();
    demos.validate();
    experiment.validate();
    prop1.validate();
    if (!(target.sigma > 0.0)) {
        throw ConfigError("target.sigma: must be > 0");
    }
    if (!(target.kappa > 0.0)) {
        throw ConfigError("target.kappa: must be > 0");
    }
}

ActionGrid RunConfig::make_grid() const {
    return make_env_grid(env, grid.bins);
}

SftConfig RunConfig::assemble_sft() const {
    SftConfig out = sft;
    out.seed = seed;
    out.target = target;
    out.target.kind = parse_target_kind(sft_target_kind);
    return out;
}

PpoConfig RunConfig::assemble_ppo() const {
    PpoConfig out = ppo;
    out.seed = seed;
    out.target_kind = target.kind;
    out.sigma = target.sigma;
    out.kappa = target.kappa;
    return out;
}

PolicyModel RunConfig::make_policy(std::uint64_t init_seed) const {
    return PolicyModel(env.obs_dim(), env.instruction_count(), policy.embed_dim, policy.hidden,
                       3, grid.bins, init_seed);
}

ValueModel RunConfig::make_value(std::uint64_t init_seed) const {
    return ValueModel(env.obs_dim(), env.instruction_count(), policy.embed_dim, policy.hidden,
                      init_seed);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const KeyEntry& e : registry()) {
        keys.push_back(e.key);
    }
    return keys;
}

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
    const KeyEntry* e = find_key(key);
    if (e == nullptr) {
        throw ConfigError("config: unknown key '" + key + "'");
    }
    e->set(cfg, value);
}

std::string config_get(const RunConfig& cfg, const std::string& key) {
    const KeyEntry* e = find_key(key);
    if (e == nullptr) {
        throw ConfigError("config: unknown key '" + key + "'");
    }
    return e->get(cfg);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        config_set(cfg, key, value);
    }
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("config: cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig cfg;
    apply_config_text(cfg, ss.str(), path);
    return cfg;
}

std::string render_config(const RunConfig& cfg) {
    std::string out;
    for (const KeyEntry& e : registry()) {
        out += e.key;
        out += " = ";
        out += e.get(cfg);
        out += "\n";
    }
    return out;
}

}  // namespace fan
