// Command-line front end for the fanshape library. Talks to the core
// exclusively through the C API in fan/fan.h; exit codes are 0 on success,
// 1 on validation errors, 2 on numeric or training aborts.

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fan/fan.h"

namespace {

struct ConfigHandle {
    fan_config* ptr = nullptr;
    ConfigHandle() : ptr(fan_config_create()) {}
    ~ConfigHandle() { fan_config_destroy(ptr); }
    ConfigHandle(const ConfigHandle&) = delete;
    ConfigHandle& operator=(const ConfigHandle&) = delete;
};

int status_to_exit_code(fan_status rc) {
    switch (rc) {
        case FAN_OK:
            return 0;
        case FAN_ERR_VALIDATION:
            return 1;
        default:
            return 2;
    }
}

int fail(fan_status rc) {
    std::fprintf(stderr, "fan: %s\n", fan_last_error());
    return status_to_exit_code(rc);
}

// Leftover arguments are key/value overrides: either "--key value" or
// "--key=value", with keys exactly as they appear in the config file.
int apply_overrides(fan_config* cfg, std::vector<std::string> extras) {
    // CLI11 hands extras back in reverse order
    std::vector<std::string> args(extras.rbegin(), extras.rend());
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string arg = args[i];
        if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
            std::fprintf(stderr, "fan: expected --key value override, got '%s'\n", arg.c_str());
            return 1;
        }
        arg = arg.substr(2);
        std::string key, value;
        const std::size_t eq = arg.find('=');
        if (eq != std::string::npos) {
            key = arg.substr(0, eq);
            value = arg.substr(eq + 1);
        } else {
            key = arg;
            if (i + 1 >= args.size()) {
                std::fprintf(stderr, "fan: missing value for --%s\n", key.c_str());
                return 1;
            }
            value = args[++i];
        }
        const fan_status rc = fan_config_set(cfg, key.c_str(), value.c_str());
        if (rc != FAN_OK) {
            return fail(rc);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FAN-guided regularization for discretized-action policies"};
    app.set_version_flag("--version", fan_version());
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("-c,--config", config_path, "configuration file of key = value lines")
        ->expected(1);

    struct Sub {
        const char* name;
        const char* help;
        fan_status (*run)(const fan_config*);
    };
    const std::vector<Sub> subs = {
        {"collect-demos", "record scripted-expert demonstrations", &fan_run_collect_demos},
        {"train-sft", "supervised finetuning on a demonstration file", &fan_run_train_sft},
        {"train-ppo", "reinforced finetuning on the toy environment", &fan_run_train_ppo},
        {"eval", "greedy success-rate evaluation of a checkpoint", &fan_run_eval},
        {"verify-prop1", "closed-form trust-region solution vs brute-force oracle", &fan_run_verify_prop1},
        {"experiment", "method x seed x variant comparison table", &fan_run_experiment},
        {"gradcheck", "finite-difference audits of every loss gradient", &fan_run_gradcheck},
    };

    std::vector<CLI::App*> sub_apps;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->allow_extras();
        sub_apps.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    ConfigHandle cfg;
    if (cfg.ptr == nullptr) {
        std::fprintf(stderr, "fan: out of memory\n");
        return 2;
    }

    if (!config_path.empty()) {
        const fan_status rc = fan_config_load_file(cfg.ptr, config_path.c_str());
        if (rc != FAN_OK) {
            return fail(rc);
        }
    }

    for (std::size_t i = 0; i < subs.size(); ++i) {
        CLI::App* sub = sub_apps[i];
        if (!sub->parsed()) {
            continue;
        }
        const int rc_over = apply_overrides(cfg.ptr, sub->remaining());
        if (rc_over != 0) {
            return rc_over;
        }
        fan_status rc = fan_config_validate(cfg.ptr);
        if (rc != FAN_OK) {
            return fail(rc);
        }
        rc = subs[i].run(cfg.ptr);
        if (rc != FAN_OK) {
            return fail(rc);
        }
        return 0;
    }
    return 1;
}
