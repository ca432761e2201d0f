#pragma once

#include <string>
#include <vector>

#include "lloca/model.hpp"
#include "lloca/particles.hpp"

namespace lloca {

/// One line of a machine-readable verification report.
struct CheckEntry {
    std::string stage;
    std::string metric;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline CheckEntry make_entry(std::string stage, std::string metric, double value, double tolerance)
{
    return {std::move(stage), std::move(metric), value, tolerance, value < tolerance};
}

bool all_pass(const std::vector<CheckEntry>& entries);

/// Worst relative violation per pipeline stage (predicted vectors, frames,
/// local inputs, first-block attention, output) over `trials` random
/// transformations with |beta| <= beta_max. Frame-free policies report only
/// the output stage.
std::vector<CheckEntry> check_equivariance(const LlocaTransformer& model, const Batch& batch, int trials,
                                           double beta_max, Rng& rng, double tolerance = 1e-6);

/// Worst relative finite-difference error (central, h = 1e-5) of every
/// autodiff primitive and of an end-to-end loss, over `trials` random instances.
std::vector<CheckEntry> check_gradients(int trials, Rng& rng, double tolerance = 1e-6);

} // namespace lloca
