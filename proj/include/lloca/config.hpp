#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "lloca/frames_net.hpp"
#include "lloca/model.hpp"
#include "lloca/toy_task.hpp"

namespace lloca {

/// Everything a run needs, assembled from a key=value file.
struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model;
    FramePolicy policy;
    FramesNetConfig frames;
    TrainConfig train;
    TaskConfig task;
    long n_train = 100000;
    long n_val = 10000;
    long n_test = 10000;
    std::uint64_t split_seed = 0;
    // Present in configs written next to trained checkpoints.
    std::optional<Standardization> stats;
    std::optional<double> momentum_scale;
};

/// Parses "key = value" lines; '#' starts a comment. Throws ConfigError on
/// malformed lines and duplicate keys.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Builds a RunConfig. `seed` is mandatory; LLOCA_SEED overrides it when
/// `use_env` is set. Unknown keys throw ConfigError.
RunConfig run_config_from(const std::map<std::string, std::string>& kv, bool use_env = true);
RunConfig load_run_config(const std::filesystem::path& path, bool use_env = true);

/// Canonical key=value text; run_config_from(parse_key_values(to_text(c))) == c.
std::string to_text(const RunConfig& c);

} // namespace lloca
