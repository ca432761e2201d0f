#pragma once

#include <filesystem>
#include <vector>

#include "lloca/autodiff.hpp"

namespace lloca {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.99;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments, one buffer per parameter in ParameterSet order.
struct AdamState {
    std::vector<ad::Tensor> m;
    std::vector<ad::Tensor> v;
    long step = 0;
};

/// One bias-corrected Adam update using Parameter::grad. Frozen parameters are skipped.
void adam_step(ad::ParameterSet& params, AdamState& state, const AdamConfig& cfg);

/// Flat binary checkpoint: "LLCP", version, count, then per parameter
/// name length, name, rank, dims (u64) and little-endian float64 values.
void save_checkpoint(const ad::ParameterSet& params, const std::filesystem::path& path);

/// Loads values by name into an existing set. Throws FormatError on a missing
/// name, shape mismatch, bad magic or truncation.
void load_checkpoint(ad::ParameterSet& params, const std::filesystem::path& path);

} // namespace lloca
