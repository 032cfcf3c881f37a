#include "fan/fan.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "fan/config.hpp"
#include "fan/errors.hpp"
#include "fan/runner.hpp"

struct fan_config {
    fan::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

fan_status classify(const std::exception& e) {
    if (dynamic_cast<const fan::IoError*>(&e) != nullptr) {
        return FAN_ERR_IO;
    }
    if (dynamic_cast<const fan::NumericError*>(&e) != nullptr ||
        dynamic_cast<const fan::SolverError*>(&e) != nullptr ||
        dynamic_cast<const fan::CapacityError*>(&e) != nullptr) {
        return FAN_ERR_NUMERIC;
    }
    if (dynamic_cast<const fan::Error*>(&e) != nullptr) {
        return FAN_ERR_VALIDATION;
    }
    return FAN_ERR_INTERNAL;
}

template <typename F>
fan_status guarded(F&& f) {
    try {
        f();
        return FAN_OK;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return classify(e);
    } catch (...) {
        g_last_error = "unknown error";
        return FAN_ERR_INTERNAL;
    }
}

fan_status run_guarded(const fan_config* cfg, void (*fn)(const fan::RunConfig&)) {
    if (cfg == nullptr) {
        g_last_error = "null config handle";
        return FAN_ERR_VALIDATION;
    }
    return guarded([&] { fn(cfg->cfg); });
}

}  // namespace

extern "C" {

const char* fan_version(void) {
    return fan::kArtifactVersion;
}

const char* fan_last_error(void) {
    return g_last_error.c_str();
}

fan_config* fan_config_create(void) {
    return new (std::nothrow) fan_config{};
}

void fan_config_destroy(fan_config* cfg) {
    delete cfg;
}

fan_status fan_config_load_file(fan_config* cfg, const char* path) {
    if (cfg == nullptr || path == nullptr) {
        g_last_error = "null argument";
        return FAN_ERR_VALIDATION;
    }
    return guarded([&] {
        std::ifstream in(path);
        if (!in) {
            throw fan::IoError("config: cannot open " + std::string(path));
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        fan::apply_config_text(cfg->cfg, ss.str(), path);
    });
}

fan_status fan_config_set(fan_config* cfg, const char* key, const char* value) {
    if (cfg == nullptr || key == nullptr || value == nullptr) {
        g_last_error = "null argument";
        return FAN_ERR_VALIDATION;
    }
    return guarded([&] { fan::config_set(cfg->cfg, key, value); });
}

fan_status fan_config_get(const fan_config* cfg, const char* key, char* buf, size_t len) {
    if (cfg == nullptr || key == nullptr || buf == nullptr || len == 0) {
        g_last_error = "null argument";
        return FAN_ERR_VALIDATION;
    }
    return guarded([&] {
        const std::string value = fan::config_get(cfg->cfg, key);
        std::strncpy(buf, value.c_str(), len - 1);
        buf[len - 1] = '\0';
    });
}

size_t fan_config_key_count(void) {
    return fan::config_keys().size();
}

const char* fan_config_key_name(size_t index) {
    static thread_local std::string name;
    const auto keys = fan::config_keys();
    if (index >= keys.size()) {
        return nullptr;
    }
    name = keys[index];
    return name.c_str();
}

fan_status fan_config_validate(const fan_config* cfg) {
    if (cfg == nullptr) {
        g_last_error = "null config handle";
        return FAN_ERR_VALIDATION;
    }
    return guarded([&] { cfg->cfg.validate(); });
}

fan_status fan_run_collect_demos(const fan_config* cfg) {
    return run_guarded(cfg, &fan::run_collect_demos);
}

fan_status fan_run_train_sft(const fan_config* cfg) {
    return run_guarded(cfg, &fan::run_train_sft);
}

fan_status fan_run_train_ppo(const fan_config* cfg) {
    return run_guarded(cfg, &fan::run_train_ppo);
}

fan_status fan_run_eval(const fan_config* cfg) {
    return run_guarded(cfg, &fan::run_eval);
}

fan_status fan_run_verify_prop1(const fan_config* cfg) {
    return run_guarded(cfg, &fan::run_verify_prop1);
}

fan_status fan_run_experiment(const fan_config* cfg) {
    return run_guarded(cfg, &fan::run_experiment_cmd);
}

fan_status fan_run_gradcheck(const fan_config* cfg) {
    return run_guarded(cfg, &fan::run_gradcheck);
}

}  // extern "C"
