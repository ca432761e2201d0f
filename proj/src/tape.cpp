#include <cmath>

#include "lloca/autodiff.hpp"
#include "lloca/errors.hpp"

namespace lloca::ad {

Tensor::Tensor(int r, int c, const std::vector<double>& values) : rows(r), cols(c), data(values.begin(), values.end())
{
    if (data.size() != static_cast<std::size_t>(r) * c) throw ShapeError("Tensor: value count does not match shape");
}

Parameter& ParameterSet::add(std::string name, Tensor init)
{
    if (find(name)) throw ShapeError("duplicate parameter name '" + name + "'");
    Parameter p;
    p.name = std::move(name);
    p.grad = Tensor(init.rows, init.cols);
    p.value = std::move(init);
    params_.push_back(std::move(p));
    return params_.back();
}

Parameter* ParameterSet::find(const std::string& name)
{
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const
{
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

std::size_t ParameterSet::count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterSet::zero_grad()
{
    for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

Tensor init_weight(Rng& rng, int fan_in, int fan_out)
{
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    Tensor w(fan_in, fan_out);
    for (double& v : w.data) v = normal(rng);
    return w;
}

const Tensor& Var::value() const { return tape->value(id); }

double Var::item() const
{
    const Tensor& v = value();
    if (v.rows != 1 || v.cols != 1) throw ShapeError("item() needs a 1x1 value");
    return v.data[0];
}

Var Tape::push(Node node)
{
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor t)
{
    Node n;
    n.value = std::move(t);
    return push(std::move(n));
}

Var Tape::param(Parameter& p)
{
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
    Node n;
    n.value = p.value;
    n.param = &p;
    n.needs_grad = grad_enabled_ && p.trainable;
    Var v = push(std::move(n));
    param_nodes_[&p] = v.id;
    return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward fn)
{
    return record(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, Backward fn)
{
    Node n;
    n.value = std::move(value);
    for (const Var& p : parents) {
        if (p.tape != this) throw GraphError("operand belongs to a different tape");
        if (grad_enabled_ && nodes_[static_cast<std::size_t>(p.id)].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.fn = std::move(fn);
    return push(std::move(n));
}

Tensor* Tape::grad_buffer(Var v)
{
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return nullptr;
    if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.rows, n.value.cols);
    return &n.grad;
}

const Tensor& Tape::grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

void Tape::backward(Var loss)
{
    if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
        throw GraphError("backward: loss node is not on this tape");
    Node& root = nodes_[static_cast<std::size_t>(loss.id)];
    if (root.value.rows != 1 || root.value.cols != 1) throw ShapeError("backward: loss must be a 1x1 scalar");
    if (!root.needs_grad) return;
    grad_buffer(loss)->data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.fn) n.fn(*this, n.grad);
        if (n.param) {
            auto& dst = n.param->grad.data;
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad.data[i];
        }
    }
}

} // namespace lloca::ad
