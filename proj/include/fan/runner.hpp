#pragma once

#include <string>

#include "fan/config.hpp"

namespace fan {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Subcommand entry points. Each prepares the output directory, echoes the
// resolved configuration plus a manifest, runs, and writes its outputs.
// Human-readable progress goes to stderr; machine output goes to files.
// Validation problems throw ConfigError/ParseError/IoError; numeric or
// training failures throw NumericError/SolverError.
void run_collect_demos(const RunConfig& cfg);
void run_train_sft(const RunConfig& cfg);
void run_train_ppo(const RunConfig& cfg);
void run_eval(const RunConfig& cfg);
void run_verify_prop1(const RunConfig& cfg);
void run_experiment_cmd(const RunConfig& cfg);
void run_gradcheck(const RunConfig& cfg);

// "canonical" or an OOD axis name.
EnvConfig resolve_variant(const EnvConfig& base, const std::string& name);

}  // namespace fan
