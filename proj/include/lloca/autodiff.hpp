#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <new>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "lloca/minkowski.hpp"

namespace lloca::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 64-byte aligned allocator that leaves new elements uninitialised unless a
/// value is given. Fixed alignment keeps vectorised reductions bit-reproducible.
template <class T>
struct DefaultInitAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    DefaultInitAllocator() = default;
    template <class U>
    DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept
    {
    }
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
    template <class U>
    bool operator==(const DefaultInitAllocator<U>&) const noexcept
    {
        return true;
    }
    template <class U>
    void construct(U* p) noexcept
    {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args)
    {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

using Buffer = std::vector<double, DefaultInitAllocator<double>>;

/// Dense row-major 2D array. Every autodiff value is one of these; batched
/// per-row objects (four-vectors, 4x4 frames) occupy 4 or 16 columns.
struct Tensor {
    int rows = 0;
    int cols = 0;
    Buffer data;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
    Tensor(int r, int c, const std::vector<double>& values);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    /// Shape without initialised values; every entry must be written before use.
    static Tensor uninit(int r, int c)
    {
        Tensor t;
        t.rows = r;
        t.cols = c;
        t.data.resize(static_cast<std::size_t>(r) * c);
        return t;
    }

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    Eigen::Map<RowMatrix> mat() { return {data.data(), rows, cols}; }
    Eigen::Map<const RowMatrix> mat() const { return {data.data(), rows, cols}; }
};

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

/// Owns parameters in registration order. Addresses are stable.
class ParameterSet {
public:
    Parameter& add(std::string name, Tensor init);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }

    /// Total number of scalars.
    std::size_t count() const;
    void zero_grad();

private:
    std::deque<Parameter> params_;
};

/// N(0, 1/fan_in) weight of shape (fan_in, fan_out).
Tensor init_weight(Rng& rng, int fan_in, int fan_out);

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    int rows() const { return value().rows; }
    int cols() const { return value().cols; }
    double item() const; // value of a 1x1 node
};

/// Define-by-run reverse-mode record. Node ids are assigned in creation
/// order, which is a topological order of the graph.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor t);
    Var param(Parameter& p);
    Var record(Tensor value, std::initializer_list<Var> parents, Backward fn);
    Var record(Tensor value, const std::vector<Var>& parents, Backward fn);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    /// Gradient buffer of `v`, or nullptr when `v` does not lead to any parameter.
    Tensor* grad_buffer(Var v);
    /// Gradient accumulated on `v` by the last backward(); empty if none.
    const Tensor& grad(Var v) const;

    /// Seeds d(loss)/d(loss) = 1, runs every recorded VJP once in reverse order,
    /// then adds leaf gradients into Parameter::grad.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        Parameter* param = nullptr;
        Backward fn;
    };

    Var push(Node node);

    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
    bool grad_enabled_;
};

} // namespace lloca::ad
