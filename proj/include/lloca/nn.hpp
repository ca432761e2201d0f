#pragma once

#include <string>
#include <vector>

#include "lloca/autodiff.hpp"
#include "lloca/ops.hpp"

namespace lloca::nn {

/// y = x W + b. W ~ N(0, 1/in), b = 0.
struct Linear {
    ad::Parameter* w = nullptr;
    ad::Parameter* b = nullptr;

    static Linear create(ad::ParameterSet& ps, const std::string& name, int in, int out, Rng& rng);
    ad::Var operator()(ad::Tape& t, ad::Var x) const;
    int in() const { return w->value.rows; }
    int out() const { return w->value.cols; }
};

enum class Activation { Gelu, Relu };

/// Linear layers with an activation between consecutive layers (none after the last).
struct Mlp {
    std::vector<Linear> layers;
    Activation act = Activation::Gelu;

    /// widths = {in, hidden..., out}
    static Mlp create(ad::ParameterSet& ps, const std::string& name, const std::vector<int>& widths, Rng& rng,
                      Activation act = Activation::Gelu);
    ad::Var operator()(ad::Tape& t, ad::Var x) const;
    /// Marks every parameter trainable or frozen.
    void set_trainable(bool on) const;
};

struct LayerNorm {
    ad::Parameter* gamma = nullptr;
    ad::Parameter* beta = nullptr;

    static LayerNorm create(ad::ParameterSet& ps, const std::string& name, int width);
    ad::Var operator()(ad::Tape& t, ad::Var x) const;
};

} // namespace lloca::nn
