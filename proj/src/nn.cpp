#include "lloca/nn.hpp"

#include "lloca/errors.hpp"

namespace lloca::nn {

Linear Linear::create(ad::ParameterSet& ps, const std::string& name, int in, int out, Rng& rng)
{
    Linear l;
    l.w = &ps.add(name + ".w", ad::init_weight(rng, in, out));
    l.b = &ps.add(name + ".b", ad::Tensor(1, out));
    return l;
}

ad::Var Linear::operator()(ad::Tape& t, ad::Var x) const { return ad::linear(x, t.param(*w), t.param(*b)); }

Mlp Mlp::create(ad::ParameterSet& ps, const std::string& name, const std::vector<int>& widths, Rng& rng, Activation act)
{
    if (widths.size() < 2) throw ConfigError("Mlp needs at least an input and an output width");
    Mlp m;
    m.act = act;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        m.layers.push_back(Linear::create(ps, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
    return m;
}

ad::Var Mlp::operator()(ad::Tape& t, ad::Var x) const
{
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i](t, x);
        if (i + 1 < layers.size()) x = act == Activation::Gelu ? ad::gelu(x) : ad::relu(x);
    }
    return x;
}

void Mlp::set_trainable(bool on) const
{
    for (const Linear& l : layers) {
        l.w->trainable = on;
        l.b->trainable = on;
    }
}

LayerNorm LayerNorm::create(ad::ParameterSet& ps, const std::string& name, int width)
{
    LayerNorm n;
    n.gamma = &ps.add(name + ".gamma", ad::Tensor(1, width, 1.0));
    n.beta = &ps.add(name + ".beta", ad::Tensor(1, width));
    return n;
}

ad::Var LayerNorm::operator()(ad::Tape& t, ad::Var x) const
{
    return ad::layernorm(x, t.param(*gamma), t.param(*beta));
}

} // namespace lloca::nn
