#include "lloca/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lloca/errors.hpp"
#include "vecmath.hpp"

namespace lloca::ad {

namespace {

void need(bool ok, const std::string& what)
{
    if (!ok) throw ShapeError(what);
}

std::string shape(const Tensor& t) { return "(" + std::to_string(t.rows) + "," + std::to_string(t.cols) + ")"; }

int bdim(int a, int b, const char* op, const Tensor& ta, const Tensor& tb)
{
    if (a == b) return a;
    if (a == 1) return b;
    if (b == 1) return a;
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape(ta) + " with " + shape(tb));
}

// Elementwise binary op with broadcasting. `df` returns (d/da, d/db) at (a, b).
template <class F, class DF>
Var binary(Var a, Var b, const char* name, F f, DF df)
{
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    const int rows = bdim(ta.rows, tb.rows, name, ta, tb);
    const int cols = bdim(ta.cols, tb.cols, name, ta, tb);
    Tensor out = Tensor::uninit(rows, cols);
    const int ars = ta.rows == 1 ? 0 : ta.cols, acs = ta.cols == 1 ? 0 : 1;
    const int brs = tb.rows == 1 ? 0 : tb.cols, bcs = tb.cols == 1 ? 0 : 1;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out(i, j) = f(ta.data[i * ars + j * acs], tb.data[i * brs + j * bcs]);
    return a.tape->record(std::move(out), {a, b}, [a, b, ars, acs, brs, bcs, df](Tape& t, const Tensor& g) {
        const Tensor& ta = t.value(a.id);
        const Tensor& tb = t.value(b.id);
        Tensor* ga = t.grad_buffer(a);
        Tensor* gb = t.grad_buffer(b);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                const int ia = i * ars + j * acs, ib = i * brs + j * bcs;
                const auto [da, db] = df(ta.data[ia], tb.data[ib]);
                const double gij = g(i, j);
                if (ga) ga->data[ia] += gij * da;
                if (gb) gb->data[ib] += gij * db;
            }
    });
}

// Elementwise unary op; `df(x, y)` is dy/dx given input x and output y.
template <class F, class DF>
Var unary(Var x, F f, DF df)
{
    const Tensor& tx = x.value();
    Tensor out = Tensor::uninit(tx.rows, tx.cols);
    for (std::size_t i = 0; i < tx.size(); ++i) out.data[i] = f(tx.data[i]);
    const int yid = static_cast<int>(x.tape->size()); // id the output node will receive
    return x.tape->record(std::move(out), {x}, [x, yid, df](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        const Tensor& tx = t.value(x.id);
        const Tensor& ty = t.value(yid);
        for (std::size_t i = 0; i < g.size(); ++i) gx->data[i] += g.data[i] * df(tx.data[i], ty.data[i]);
    });
}

constexpr double kMetric[4] = {1.0, -1.0, -1.0, -1.0};

// The 24 permutations of (0,1,2,3) with their signs.
struct Perm {
    int i[4];
    double sign;
};

const std::vector<Perm>& permutations4()
{
    static const std::vector<Perm> perms = [] {
        std::vector<Perm> out;
        int p[4] = {0, 1, 2, 3};
        do {
            int inv = 0;
            for (int a = 0; a < 4; ++a)
                for (int b = a + 1; b < 4; ++b)
                    if (p[a] > p[b]) ++inv;
            out.push_back({{p[0], p[1], p[2], p[3]}, inv % 2 == 0 ? 1.0 : -1.0});
        } while (std::next_permutation(p, p + 4));
        return out;
    }();
    return perms;
}

int pow4(int n)
{
    int d = 1;
    for (int i = 0; i < n; ++i) d *= 4;
    return d;
}

// y = (M on every axis except `skip`) x for one order-n block; skip = -1 transforms all axes.
void contract_all_but(const double* m, int order, int skip, const double* x, double* y, std::vector<double>& scratch,
                      std::vector<double>& tmp)
{
    const int d = pow4(order);
    scratch.assign(x, x + d);
    tmp.resize(d);
    for (int axis = 0; axis < order; ++axis) {
        if (axis == skip) continue;
        const int inner = pow4(order - 1 - axis);
        const int outer = pow4(axis);
        for (int o = 0; o < outer; ++o)
            for (int i = 0; i < inner; ++i) {
                const int base = o * 4 * inner + i;
                for (int r = 0; r < 4; ++r) {
                    double acc = 0.0;
                    for (int k = 0; k < 4; ++k) acc += m[r * 4 + k] * scratch[base + k * inner];
                    tmp[base + r * inner] = acc;
                }
            }
        scratch.swap(tmp);
    }
    std::copy(scratch.begin(), scratch.end(), y);
}

} // namespace

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b)
{
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Var a, Var b)
{
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Var a, Var b)
{
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double x, double y) { return std::pair{y, x}; });
}

Var div(Var a, Var b)
{
    return binary(a, b, "div", [](double x, double y) { return x / y; },
                  [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Var scale(Var x, double s)
{
    return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(Var x, double s)
{
    return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var neg(Var x) { return scale(x, -1.0); }

Var sqrt(Var x)
{
    return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Var exp(Var x)
{
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x)
{
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var abs(Var x)
{
    return unary(x, [](double v) { return std::abs(v); },
                 [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var relu(Var x)
{
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var x)
{
    const Tensor& tx = x.value();
    Tensor out = Tensor::uninit(tx.rows, tx.cols);
    auto slope = std::make_shared<Tensor>(Tensor::uninit(tx.rows, tx.cols));
    detail::gelu_forward(tx.data.data(), out.data.data(), slope->data.data(), tx.size());
    return x.tape->record(std::move(out), {x}, [x, slope](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_buffer(x))
            for (std::size_t i = 0; i < g.size(); ++i) gx->data[i] += g.data[i] * slope->data[i];
    });
}

// ---------------------------------------------------------------- reductions

Var sum(Var x)
{
    const Tensor& tx = x.value();
    double s = 0.0;
    for (double v : tx.data) s += v;
    return x.tape->record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_buffer(x))
            for (double& v : gx->data) v += g.data[0];
    });
}

Var mean(Var x)
{
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

Var sum_cols(Var x)
{
    const Tensor& tx = x.value();
    Tensor out = Tensor::uninit(tx.rows, 1);
    for (int i = 0; i < tx.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < tx.cols; ++j) s += tx(i, j);
        out(i, 0) = s;
    }
    return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        for (int i = 0; i < gx->rows; ++i)
            for (int j = 0; j < gx->cols; ++j) (*gx)(i, j) += g(i, 0);
    });
}

Var sum_rows(Var x)
{
    const Tensor& tx = x.value();
    Tensor out(1, tx.cols);
    for (int i = 0; i < tx.rows; ++i)
        for (int j = 0; j < tx.cols; ++j) out(0, j) += tx(i, j);
    return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        for (int i = 0; i < gx->rows; ++i)
            for (int j = 0; j < gx->cols; ++j) (*gx)(i, j) += g(0, j);
    });
}

Var group_sum(Var x, int group)
{
    const Tensor& tx = x.value();
    need(group > 0 && tx.rows % group == 0, "group_sum: rows not divisible by group");
    Tensor out(tx.rows / group, tx.cols);
    for (int i = 0; i < tx.rows; ++i) {
        double* dst = out.row(i / group);
        const double* src = tx.row(i);
        for (int j = 0; j < tx.cols; ++j) dst[j] += src[j];
    }
    return x.tape->record(std::move(out), {x}, [x, group](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        for (int i = 0; i < gx->rows; ++i) {
            const double* src = g.row(i / group);
            double* dst = gx->row(i);
            for (int j = 0; j < gx->cols; ++j) dst[j] += src[j];
        }
    });
}

Var repeat_rows(Var x, int times)
{
    const Tensor& tx = x.value();
    need(times > 0, "repeat_rows: times must be positive");
    Tensor out = Tensor::uninit(tx.rows * times, tx.cols);
    for (int i = 0; i < out.rows; ++i) std::copy(tx.row(i / times), tx.row(i / times) + tx.cols, out.row(i));
    return x.tape->record(std::move(out), {x}, [x, times](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        for (int i = 0; i < g.rows; ++i) {
            double* dst = gx->row(i / times);
            const double* src = g.row(i);
            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
        }
    });
}

Var gather_rows(Var x, std::shared_ptr<const std::vector<int>> index)
{
    const Tensor& tx = x.value();
    Tensor out = Tensor::uninit(static_cast<int>(index->size()), tx.cols);
    for (int i = 0; i < out.rows; ++i) {
        const int src = (*index)[static_cast<std::size_t>(i)];
        need(src >= 0 && src < tx.rows, "gather_rows: index out of range");
        std::copy(tx.row(src), tx.row(src) + tx.cols, out.row(i));
    }
    return x.tape->record(std::move(out), {x}, [x, index](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        for (int i = 0; i < g.rows; ++i) {
            double* dst = gx->row((*index)[static_cast<std::size_t>(i)]);
            const double* src = g.row(i);
            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
        }
    });
}

// ---------------------------------------------------------------- layout

Var concat_cols(const std::vector<Var>& parts)
{
    need(!parts.empty(), "concat_cols: no inputs");
    const int rows = parts.front().rows();
    int cols = 0;
    for (const Var& p : parts) {
        need(p.rows() == rows, "concat_cols: row counts differ");
        cols += p.cols();
    }
    Tensor out = Tensor::uninit(rows, cols);
    int offset = 0;
    for (const Var& p : parts) {
        const Tensor& tp = p.value();
        for (int i = 0; i < rows; ++i) std::copy(tp.row(i), tp.row(i) + tp.cols, out.row(i) + offset);
        offset += tp.cols;
    }
    return parts.front().tape->record(std::move(out), parts, [parts](Tape& t, const Tensor& g) {
        int offset = 0;
        for (const Var& p : parts) {
            const int c = t.value(p.id).cols;
            if (Tensor* gp = t.grad_buffer(p))
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < c; ++j) (*gp)(i, j) += g(i, offset + j);
            offset += c;
        }
    });
}

Var slice_cols(Var x, int start, int count)
{
    const Tensor& tx = x.value();
    need(start >= 0 && count >= 0 && start + count <= tx.cols, "slice_cols: range out of bounds");
    Tensor out = Tensor::uninit(tx.rows, count);
    for (int i = 0; i < tx.rows; ++i) std::copy(tx.row(i) + start, tx.row(i) + start + count, out.row(i));
    return x.tape->record(std::move(out), {x}, [x, start, count](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < count; ++j) (*gx)(i, start + j) += g(i, j);
    });
}

// ---------------------------------------------------------------- dense algebra

Var matmul(Var a, Var b)
{
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    need(ta.cols == tb.rows, "matmul: inner dimensions differ " + shape(ta) + " x " + shape(tb));
    Tensor out = Tensor::uninit(ta.rows, tb.cols);
    out.mat().noalias() = ta.mat() * tb.mat();
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_buffer(a)) ga->mat().noalias() += g.mat() * t.value(b.id).mat().transpose();
        if (Tensor* gb = t.grad_buffer(b)) gb->mat().noalias() += t.value(a.id).mat().transpose() * g.mat();
    });
}

Var linear(Var x, Var w, Var b)
{
    const Tensor& tx = x.value();
    const Tensor& tw = w.value();
    const Tensor& tb = b.value();
    need(tx.cols == tw.rows, "linear: input width " + shape(tx) + " vs weight " + shape(tw));
    need(tb.rows == 1 && tb.cols == tw.cols, "linear: bias must be (1, out)");
    Tensor out = Tensor::uninit(tx.rows, tw.cols);
    out.mat().noalias() = tx.mat() * tw.mat();
    out.mat().rowwise() += tb.mat().row(0);
    return x.tape->record(std::move(out), {x, w, b}, [x, w, b](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_buffer(x)) gx->mat().noalias() += g.mat() * t.value(w.id).mat().transpose();
        if (Tensor* gw = t.grad_buffer(w)) gw->mat().noalias() += t.value(x.id).mat().transpose() * g.mat();
        if (Tensor* gb = t.grad_buffer(b)) gb->mat().row(0) += g.mat().colwise().sum();
    });
}

// ---------------------------------------------------------------- softmax / norm

Var softmax(Var x)
{
    const Tensor& tx = x.value();
    Tensor out = Tensor::uninit(tx.rows, tx.cols);
    for (int i = 0; i < tx.rows; ++i) {
        const double* src = tx.row(i);
        double* dst = out.row(i);
        const double mx = *std::max_element(src, src + tx.cols);
        double z = 0.0;
        for (int j = 0; j < tx.cols; ++j) z += (dst[j] = std::exp(src[j] - mx));
        for (int j = 0; j < tx.cols; ++j) dst[j] /= z;
    }
    const int yid = static_cast<int>(x.tape->size());
    return x.tape->record(std::move(out), {x}, [x, yid](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        const Tensor& ty = t.value(yid);
        for (int i = 0; i < g.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < g.cols; ++j) dot += g(i, j) * ty(i, j);
            for (int j = 0; j < g.cols; ++j) (*gx)(i, j) += ty(i, j) * (g(i, j) - dot);
        }
    });
}

Var group_softmax(Var x, int group)
{
    const Tensor& tx = x.value();
    need(group > 0 && tx.rows % group == 0, "group_softmax: rows not divisible by group");
    const int groups = tx.rows / group;
    auto y = std::make_shared<Tensor>(tx.rows, tx.cols);
    for (int b = 0; b < groups; ++b)
        for (int c = 0; c < tx.cols; ++c) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < group; ++j) mx = std::max(mx, tx(b * group + j, c));
            double z = 0.0;
            for (int j = 0; j < group; ++j) z += ((*y)(b * group + j, c) = std::exp(tx(b * group + j, c) - mx));
            for (int j = 0; j < group; ++j) (*y)(b * group + j, c) /= z;
        }
    Tensor out = *y;
    return x.tape->record(std::move(out), {x}, [x, y, group, groups](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        if (!gx) return;
        for (int b = 0; b < groups; ++b)
            for (int c = 0; c < g.cols; ++c) {
                double dot = 0.0;
                for (int j = 0; j < group; ++j) dot += g(b * group + j, c) * (*y)(b * group + j, c);
                for (int j = 0; j < group; ++j) {
                    const int r = b * group + j;
                    (*gx)(r, c) += (*y)(r, c) * (g(r, c) - dot);
                }
            }
    });
}

Var layernorm(Var x, Var gamma, Var beta, double eps)
{
    const Tensor& tx = x.value();
    const Tensor& tg = gamma.value();
    const Tensor& tb = beta.value();
    need(tg.rows == 1 && tg.cols == tx.cols && tb.same_shape(tg), "layernorm: gamma/beta must be (1, channels)");
    const int n = tx.cols;
    auto xhat = std::make_shared<Tensor>(tx.rows, n);
    auto inv_std = std::make_shared<std::vector<double>>(tx.rows);
    Tensor out = Tensor::uninit(tx.rows, n);
    for (int i = 0; i < tx.rows; ++i) {
        const double* src = tx.row(i);
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += src[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (src[j] - mu) * (src[j] - mu);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (int j = 0; j < n; ++j) {
            const double h = (src[j] - mu) * is;
            (*xhat)(i, j) = h;
            out(i, j) = tg.data[j] * h + tb.data[j];
        }
    }
    return x.tape->record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, n](Tape& t, const Tensor& g) {
        const Tensor& tg = t.value(gamma.id);
        if (Tensor* gg = t.grad_buffer(gamma))
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < n; ++j) gg->data[j] += g(i, j) * (*xhat)(i, j);
        if (Tensor* gb = t.grad_buffer(beta))
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < n; ++j) gb->data[j] += g(i, j);
        if (Tensor* gx = t.grad_buffer(x)) {
            std::vector<double> dh(n);
            for (int i = 0; i < g.rows; ++i) {
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < n; ++j) {
                    dh[j] = g(i, j) * tg.data[j];
                    m1 += dh[j];
                    m2 += dh[j] * (*xhat)(i, j);
                }
                m1 /= n;
                m2 /= n;
                for (int j = 0; j < n; ++j) (*gx)(i, j) += (*inv_std)[i] * (dh[j] - m1 - (*xhat)(i, j) * m2);
            }
        }
    });
}

// ---------------------------------------------------------------- Minkowski rows

Var mink_product(Var x, Var y)
{
    const Tensor& tx = x.value();
    const Tensor& ty = y.value();
    need(tx.cols == 4 && tx.same_shape(ty), "mink_product: expects matching (r,4) inputs");
    Tensor out = Tensor::uninit(tx.rows, 1);
    for (int i = 0; i < tx.rows; ++i) {
        const double* a = tx.row(i);
        const double* b = ty.row(i);
        out(i, 0) = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
    }
    return x.tape->record(std::move(out), {x, y}, [x, y](Tape& t, const Tensor& g) {
        const Tensor& tx = t.value(x.id);
        const Tensor& ty = t.value(y.id);
        Tensor* gx = t.grad_buffer(x);
        Tensor* gy = t.grad_buffer(y);
        for (int i = 0; i < g.rows; ++i)
            for (int mu = 0; mu < 4; ++mu) {
                const double s = kMetric[mu] * g(i, 0);
                if (gx) (*gx)(i, mu) += s * ty(i, mu);
                if (gy) (*gy)(i, mu) += s * tx(i, mu);
            }
    });
}

Var cross_product(Var a, Var b)
{
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    need(ta.cols == 3 && ta.same_shape(tb), "cross_product: expects matching (r,3) inputs");
    auto cross = [](const double* u, const double* v, double* w) {
        w[0] = u[1] * v[2] - u[2] * v[1];
        w[1] = u[2] * v[0] - u[0] * v[2];
        w[2] = u[0] * v[1] - u[1] * v[0];
    };
    Tensor out = Tensor::uninit(ta.rows, 3);
    for (int i = 0; i < ta.rows; ++i) cross(ta.row(i), tb.row(i), out.row(i));
    return a.tape->record(std::move(out), {a, b}, [a, b, cross](Tape& t, const Tensor& g) {
        const Tensor& ta = t.value(a.id);
        const Tensor& tb = t.value(b.id);
        Tensor* ga = t.grad_buffer(a);
        Tensor* gb = t.grad_buffer(b);
        double w[3];
        for (int i = 0; i < g.rows; ++i) {
            if (ga) {
                cross(tb.row(i), g.row(i), w); // b x dc
                for (int k = 0; k < 3; ++k) (*ga)(i, k) += w[k];
            }
            if (gb) {
                cross(g.row(i), ta.row(i), w); // dc x a
                for (int k = 0; k < 3; ++k) (*gb)(i, k) += w[k];
            }
        }
    });
}

Var boost_assembly(Var v)
{
    const Tensor& tv = v.value();
    need(tv.cols == 4, "boost_assembly: expects (r,4)");
    Tensor out = Tensor::uninit(tv.rows, 16);
    for (int i = 0; i < tv.rows; ++i) {
        const double* p = tv.row(i);
        const double m2 = p[0] * p[0] - p[1] * p[1] - p[2] * p[2] - p[3] * p[3];
        if (!(m2 > 0.0) || !(p[0] > 0.0))
            throw DomainError("boost_assembly: vector must be timelike and future-directed");
        const double m = std::sqrt(m2);
        const double c = 1.0 / (m * (p[0] + m));
        double* b = out.row(i);
        b[0] = p[0] / m;
        for (int r = 1; r < 4; ++r) {
            b[r] = -p[r] / m;
            b[4 * r] = -p[r] / m;
            for (int s = 1; s < 4; ++s) b[4 * r + s] = (r == s ? 1.0 : 0.0) + c * p[r] * p[s];
        }
    }
    return v.tape->record(std::move(out), {v}, [v](Tape& t, const Tensor& g) {
        Tensor* gv = t.grad_buffer(v);
        if (!gv) return;
        const Tensor& tv = t.value(v.id);
        for (int i = 0; i < tv.rows; ++i) {
            const double* p = tv.row(i);
            const double* G = g.row(i);
            const double m = std::sqrt(p[0] * p[0] - p[1] * p[1] - p[2] * p[2] - p[3] * p[3]);
            const double a = 1.0 / m, a3 = a * a * a;
            const double c = 1.0 / (m * (p[0] + m));
            double edge = 0.0; // sum_k (G0k + Gk0) p_k
            double quad = 0.0; // sum_kl Gkl p_k p_l
            for (int k = 1; k < 4; ++k) {
                edge += (G[k] + G[4 * k]) * p[k];
                for (int l = 1; l < 4; ++l) quad += G[4 * k + l] * p[k] * p[l];
            }
            double* d = gv->row(i);
            d[0] += G[0] * a * (1.0 - p[0] * p[0] * a * a) + p[0] * a3 * edge - quad * a3;
            const double dc_scale = c * c * (p[0] + 2.0 * m) * a; // dc/dp_k = dc_scale * p_k
            for (int k = 1; k < 4; ++k) {
                double sym = 0.0; // sum_l (Gkl + Glk) p_l
                for (int l = 1; l < 4; ++l) sym += (G[4 * k + l] + G[4 * l + k]) * p[l];
                d[k] += G[0] * p[0] * p[k] * a3 - (G[k] + G[4 * k]) * a - edge * p[k] * a3 + c * sym +
                        quad * dc_scale * p[k];
            }
        }
    });
}

Var bmm4(Var a, Var b)
{
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    need(ta.cols == 16 && ta.same_shape(tb), "bmm4: expects matching (r,16) inputs");
    Tensor out = Tensor::uninit(ta.rows, 16);
    for (int i = 0; i < ta.rows; ++i) {
        const double* A = ta.row(i);
        const double* B = tb.row(i);
        double* C = out.row(i);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += A[4 * r + k] * B[4 * k + c];
                C[4 * r + c] = acc;
            }
    }
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& ta = t.value(a.id);
        const Tensor& tb = t.value(b.id);
        Tensor* ga = t.grad_buffer(a);
        Tensor* gb = t.grad_buffer(b);
        for (int i = 0; i < g.rows; ++i) {
            const double* A = ta.row(i);
            const double* B = tb.row(i);
            const double* G = g.row(i);
            if (ga) {
                double* dA = ga->row(i); // G B^T
                for (int r = 0; r < 4; ++r)
                    for (int k = 0; k < 4; ++k) {
                        double acc = 0.0;
                        for (int c = 0; c < 4; ++c) acc += G[4 * r + c] * B[4 * k + c];
                        dA[4 * r + k] += acc;
                    }
            }
            if (gb) {
                double* dB = gb->row(i); // A^T G
                for (int k = 0; k < 4; ++k)
                    for (int c = 0; c < 4; ++c) {
                        double acc = 0.0;
                        for (int r = 0; r < 4; ++r) acc += A[4 * r + k] * G[4 * r + c];
                        dB[4 * k + c] += acc;
                    }
            }
        }
    });
}

Var bmv4(Var a, Var x)
{
    const Tensor& ta = a.value();
    const Tensor& tx = x.value();
    need(ta.cols == 16 && tx.cols == 4 && ta.rows == tx.rows, "bmv4: expects (r,16) and (r,4)");
    Tensor out = Tensor::uninit(ta.rows, 4);
    for (int i = 0; i < ta.rows; ++i) {
        const double* A = ta.row(i);
        const double* v = tx.row(i);
        double* y = out.row(i);
        for (int r = 0; r < 4; ++r) y[r] = A[4 * r] * v[0] + A[4 * r + 1] * v[1] + A[4 * r + 2] * v[2] + A[4 * r + 3] * v[3];
    }
    return a.tape->record(std::move(out), {a, x}, [a, x](Tape& t, const Tensor& g) {
        const Tensor& ta = t.value(a.id);
        const Tensor& tx = t.value(x.id);
        Tensor* ga = t.grad_buffer(a);
        Tensor* gx = t.grad_buffer(x);
        for (int i = 0; i < g.rows; ++i) {
            const double* G = g.row(i);
            if (ga) {
                double* dA = ga->row(i);
                for (int r = 0; r < 4; ++r)
                    for (int k = 0; k < 4; ++k) dA[4 * r + k] += G[r] * tx(i, k);
            }
            if (gx) {
                const double* A = ta.row(i);
                for (int k = 0; k < 4; ++k)
                    (*gx)(i, k) += A[k] * G[0] + A[4 + k] * G[1] + A[8 + k] * G[2] + A[12 + k] * G[3];
            }
        }
    });
}

Var transpose4(Var a)
{
    const Tensor& ta = a.value();
    need(ta.cols == 16, "transpose4: expects (r,16)");
    Tensor out = Tensor::uninit(ta.rows, 16);
    for (int i = 0; i < ta.rows; ++i)
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) out(i, 4 * r + c) = ta(i, 4 * c + r);
    return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        Tensor* ga = t.grad_buffer(a);
        if (!ga) return;
        for (int i = 0; i < g.rows; ++i)
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) (*ga)(i, 4 * c + r) += g(i, 4 * r + c);
    });
}

Var lorentz_inverse4(Var a)
{
    const Tensor& ta = a.value();
    need(ta.cols == 16, "lorentz_inverse4: expects (r,16)");
    Tensor out = Tensor::uninit(ta.rows, 16);
    for (int i = 0; i < ta.rows; ++i)
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) out(i, 4 * r + c) = kMetric[r] * kMetric[c] * ta(i, 4 * c + r);
    return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        Tensor* ga = t.grad_buffer(a);
        if (!ga) return;
        for (int i = 0; i < g.rows; ++i)
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) (*ga)(i, 4 * c + r) += kMetric[r] * kMetric[c] * g(i, 4 * r + c);
    });
}

Var levi_civita(Var u0, Var u1, Var u2)
{
    const Tensor& a = u0.value();
    const Tensor& b = u1.value();
    const Tensor& c = u2.value();
    need(a.cols == 4 && a.same_shape(b) && a.same_shape(c), "levi_civita: expects three matching (r,4) inputs");
    const auto& perms = permutations4();
    Tensor out = Tensor::uninit(a.rows, 4);
    for (int i = 0; i < a.rows; ++i) {
        double lower[4] = {0, 0, 0, 0};
        for (const Perm& p : perms) lower[p.i[0]] += p.sign * a(i, p.i[1]) * b(i, p.i[2]) * c(i, p.i[3]);
        for (int mu = 0; mu < 4; ++mu) out(i, mu) = kMetric[mu] * lower[mu];
    }
    return u0.tape->record(std::move(out), {u0, u1, u2}, [u0, u1, u2](Tape& t, const Tensor& g) {
        const Tensor& a = t.value(u0.id);
        const Tensor& b = t.value(u1.id);
        const Tensor& c = t.value(u2.id);
        Tensor* ga = t.grad_buffer(u0);
        Tensor* gb = t.grad_buffer(u1);
        Tensor* gc = t.grad_buffer(u2);
        for (int i = 0; i < g.rows; ++i)
            for (const Perm& p : permutations4()) {
                const double w = p.sign * kMetric[p.i[0]] * g(i, p.i[0]);
                if (ga) (*ga)(i, p.i[1]) += w * b(i, p.i[2]) * c(i, p.i[3]);
                if (gb) (*gb)(i, p.i[2]) += w * a(i, p.i[1]) * c(i, p.i[3]);
                if (gc) (*gc)(i, p.i[3]) += w * a(i, p.i[1]) * b(i, p.i[2]);
            }
    });
}

// ---------------------------------------------------------------- tensor reps

Var apply_rep_rows(Var m, Var x, const RepSpec& spec)
{
    const Tensor& tm = m.value();
    const Tensor& tx = x.value();
    const int dim = spec.dimension();
    need(tm.cols == 16 && tm.rows == tx.rows, "apply_rep_rows: expects (r,16) frames matching feature rows");
    if (dim == 0 || tx.cols % dim != 0) throw DimensionError("apply_rep_rows: feature width is not a multiple of the rep dimension");
    const int copies = tx.cols / dim;
    Tensor out = Tensor::uninit(tx.rows, tx.cols);
    for (int i = 0; i < tx.rows; ++i) {
        const Mat4 lam = Eigen::Map<const Mat4>(tm.row(i));
        for (int k = 0; k < copies; ++k)
            apply_rep(lam, spec, std::span<const double>(tx.row(i) + k * dim, dim), std::span<double>(out.row(i) + k * dim, dim));
    }
    return m.tape->record(std::move(out), {m, x}, [m, x, spec, copies, dim](Tape& t, const Tensor& g) {
        const Tensor& tm = t.value(m.id);
        const Tensor& tx = t.value(x.id);
        Tensor* gm = t.grad_buffer(m);
        Tensor* gx = t.grad_buffer(x);
        std::vector<double> scratch, scratch2, z, tmp(dim);
        for (int i = 0; i < g.rows; ++i) {
            const Mat4 lam = Eigen::Map<const Mat4>(tm.row(i));
            const Mat4 lam_t = lam.transpose();
            for (int k = 0; k < copies; ++k) {
                const double* xin = tx.row(i) + k * dim;
                const double* gin = g.row(i) + k * dim;
                if (gx) {
                    apply_rep(lam_t, spec, std::span<const double>(gin, dim), tmp);
                    double* dst = gx->row(i) + k * dim;
                    for (int c = 0; c < dim; ++c) dst[c] += tmp[c];
                }
                if (!gm) continue;
                double* dM = gm->row(i);
                int offset = 0;
                for (const auto& blk : spec.blocks()) {
                    const int d = pow4(blk.order);
                    for (int rep = 0; rep < blk.multiplicity; ++rep, offset += d) {
                        if (blk.order == 0) continue;
                        if (blk.order == 1) {
                            for (int aa = 0; aa < 4; ++aa)
                                for (int bb = 0; bb < 4; ++bb) dM[4 * aa + bb] += gin[offset + aa] * xin[offset + bb];
                            continue;
                        }
                        z.resize(d);
                        for (int axis = 0; axis < blk.order; ++axis) {
                            // z = x transformed on all axes but `axis`; dM_ab += sum gy[..a..] z[..b..]
                            contract_all_but(tm.row(i), blk.order, axis, xin + offset, z.data(), scratch, scratch2);
                            const int inner = pow4(blk.order - 1 - axis);
                            const int outer = pow4(axis);
                            for (int o = 0; o < outer; ++o)
                                for (int in = 0; in < inner; ++in) {
                                    const int base = o * 4 * inner + in;
                                    for (int aa = 0; aa < 4; ++aa) {
                                        const double gy = gin[offset + base + aa * inner];
                                        if (gy == 0.0) continue;
                                        for (int bb = 0; bb < 4; ++bb) dM[4 * aa + bb] += gy * z[base + bb * inner];
                                    }
                                }
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------- attention

Tensor group_attention_weights(const Tensor& q, const Tensor& k, int group, int heads, const std::vector<double>& signs)
{
    need(q.same_shape(k) && q.rows % group == 0 && q.cols % heads == 0, "group_attention: bad shapes");
    const int d = q.cols / heads;
    need(static_cast<int>(signs.size()) == d, "group_attention: metric signs must match head dimension");
    const int groups = q.rows / group;
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor a(groups * heads * group, group);
    for (int e = 0; e < groups; ++e)
        for (int h = 0; h < heads; ++h)
            for (int i = 0; i < group; ++i) {
                double* row = a.row((e * heads + h) * group + i);
                const double* qi = q.row(e * group + i) + h * d;
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < group; ++j) {
                    const double* kj = k.row(e * group + j) + h * d;
                    double s = 0.0;
                    for (int c = 0; c < d; ++c) s += qi[c] * signs[c] * kj[c];
                    row[j] = s * inv;
                    mx = std::max(mx, row[j]);
                }
                double z = 0.0;
                for (int j = 0; j < group; ++j) z += (row[j] = std::exp(row[j] - mx));
                for (int j = 0; j < group; ++j) row[j] /= z;
            }
    return a;
}

Var group_attention(Var q, Var k, Var v, int group, int heads, std::shared_ptr<const std::vector<double>> signs)
{
    const Tensor& tq = q.value();
    const Tensor& tk = k.value();
    const Tensor& tv = v.value();
    need(tq.same_shape(tk) && tq.same_shape(tv), "group_attention: q, k, v shapes differ");
    need(group > 0 && heads > 0, "group_attention: group and heads must be positive");
    auto att = std::make_shared<Tensor>(group_attention_weights(tq, tk, group, heads, *signs));
    const int d = tq.cols / heads;
    const int groups = tq.rows / group;
    Tensor out(tq.rows, tq.cols);
    for (int e = 0; e < groups; ++e)
        for (int h = 0; h < heads; ++h)
            for (int i = 0; i < group; ++i) {
                const double* a = att->row((e * heads + h) * group + i);
                double* o = out.row(e * group + i) + h * d;
                for (int j = 0; j < group; ++j) {
                    const double* vj = tv.row(e * group + j) + h * d;
                    for (int c = 0; c < d; ++c) o[c] += a[j] * vj[c];
                }
            }
    return q.tape->record(std::move(out), {q, k, v}, [q, k, v, att, group, heads, d, groups, signs](Tape& t, const Tensor& g) {
        const Tensor& tq = t.value(q.id);
        const Tensor& tk = t.value(k.id);
        const Tensor& tv = t.value(v.id);
        Tensor* gq = t.grad_buffer(q);
        Tensor* gk = t.grad_buffer(k);
        Tensor* gv = t.grad_buffer(v);
        const double inv = 1.0 / std::sqrt(static_cast<double>(d));
        std::vector<double> da(group);
        for (int e = 0; e < groups; ++e)
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < group; ++i) {
                    const double* a = att->row((e * heads + h) * group + i);
                    const double* go = g.row(e * group + i) + h * d;
                    double dot = 0.0;
                    for (int j = 0; j < group; ++j) {
                        const double* vj = tv.row(e * group + j) + h * d;
                        double s = 0.0;
                        for (int c = 0; c < d; ++c) s += go[c] * vj[c];
                        da[j] = s;
                        dot += s * a[j];
                        if (gv) {
                            double* dv = gv->row(e * group + j) + h * d;
                            for (int c = 0; c < d; ++c) dv[c] += a[j] * go[c];
                        }
                    }
                    if (!gq && !gk) continue;
                    const double* qi = tq.row(e * group + i) + h * d;
                    for (int j = 0; j < group; ++j) {
                        const double dl = a[j] * (da[j] - dot) * inv;
                        if (dl == 0.0) continue;
                        const double* kj = tk.row(e * group + j) + h * d;
                        if (gq) {
                            double* dq = gq->row(e * group + i) + h * d;
                            for (int c = 0; c < d; ++c) dq[c] += dl * (*signs)[c] * kj[c];
                        }
                        if (gk) {
                            double* dk = gk->row(e * group + j) + h * d;
                            for (int c = 0; c < d; ++c) dk[c] += dl * (*signs)[c] * qi[c];
                        }
                    }
                }
    });
}

Var group_weighted_vectors(Var w, Var p, int group)
{
    const Tensor& tw = w.value();
    const Tensor& tp = p.value();
    need(tp.cols == 4 && tw.rows == tp.rows && group > 0 && tw.rows % group == 0,
         "group_weighted_vectors: expects (r*group, k) weights and (r*group, 4) vectors");
    const int kk = tw.cols;
    Tensor out(tw.rows / group, 4 * kk);
    for (int r = 0; r < tw.rows; ++r) {
        double* o = out.row(r / group);
        const double* pv = tp.row(r);
        for (int a = 0; a < kk; ++a) {
            const double wa = tw(r, a);
            for (int mu = 0; mu < 4; ++mu) o[4 * a + mu] += wa * pv[mu];
        }
    }
    return w.tape->record(std::move(out), {w, p}, [w, p, group, kk](Tape& t, const Tensor& g) {
        const Tensor& tw = t.value(w.id);
        const Tensor& tp = t.value(p.id);
        Tensor* gw = t.grad_buffer(w);
        Tensor* gp = t.grad_buffer(p);
        for (int r = 0; r < tw.rows; ++r) {
            const double* go = g.row(r / group);
            for (int a = 0; a < kk; ++a)
                for (int mu = 0; mu < 4; ++mu) {
                    if (gw) (*gw)(r, a) += go[4 * a + mu] * tp(r, mu);
                    if (gp) (*gp)(r, mu) += go[4 * a + mu] * tw(r, a);
                }
        }
    });
}

Var mse(Var pred, Var target)
{
    need(pred.value().same_shape(target.value()), "mse: shapes differ");
    const Var d = sub(pred, target);
    return mean(mul(d, d));
}

} // namespace lloca::ad
