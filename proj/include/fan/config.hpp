#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fan/env.hpp"
#include "fan/fanreg.hpp"
#include "fan/rft.hpp"
#include "fan/sft.hpp"

namespace fan {

struct GridConfig {
    int bins = 9;
    void validate() const;
};

struct PolicyConfig {
    std::vector<int> hidden{64, 64};
    int embed_dim = 8;
    void validate() const;
};

struct EvalSectionConfig {
    int episodes = 100;
    std::string variant = "canonical";  // "canonical" or an OOD axis name
    std::string checkpoint;             // model to evaluate
    void validate() const;
};

struct DemoSectionConfig {
    std::string file = "demos.txt";
    int count = 50;
    void validate() const;
};

struct ExperimentConfig {
    std::vector<std::string> methods{"sft", "fan-sft", "ppo", "fan-ppo"};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<std::string> variants{"canonical", "vision-weak", "semantic-unseen-instruction",
                                      "execution-start-pose", "execution-reposition"};
    int demos = 30;
    void validate() const;
};

struct Prop1Config {
    int problems = 100;
    double mesh = 0.002;
    void validate() const;
};

// Full run configuration. Section structs mirror the configuration file's
// dotted keys; assemble_sft()/assemble_ppo() merge the shared target
// section into the trainer configs.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    GridConfig grid;
    PolicyConfig policy;
    EnvConfig env;
    TargetSpec target{TargetKind::FixedGaussian, 0.3, 0.0, 0.22, 0.05};
    std::string sft_target_kind = "adaptive-gaussian";
    SftConfig sft;
    PpoConfig ppo;
    EvalSectionConfig eval;
    DemoSectionConfig demos;
    ExperimentConfig experiment;
    Prop1Config prop1;

    void validate() const;

    ActionGrid make_grid() const;
    SftConfig assemble_sft() const;   // target section + sft overrides + global seed
    PpoConfig assemble_ppo() const;   // target section + ppo fields + global seed
    PolicyModel make_policy(std::uint64_t init_seed) const;
    ValueModel make_value(std::uint64_t init_seed) const;
};

// Ordered list of every recognized configuration key.
std::vector<std::string> config_keys();

// Set/get one dotted key as text. Unknown keys and unparsable values throw
// ConfigError naming the key.
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);
std::string config_get(const RunConfig& cfg, const std::string& key);

// Parses "key = value" lines; '#' starts a comment; blank lines are
// skipped. Values are applied in file order over the defaults.
RunConfig parse_config_file(const std::string& path);
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);

// Fully-resolved echo; re-parsing it reproduces the same configuration.
std::string render_config(const RunConfig& cfg);

}  // namespace fan
