#include "lloca/verify.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "lloca/frame_ops.hpp"
#include "lloca/ops.hpp"
#include "lloca/toy_task.hpp"

namespace lloca {

using ad::Tape;
using ad::Tensor;
using ad::Var;

bool all_pass(const std::vector<CheckEntry>& entries)
{
    for (const auto& e : entries)
        if (!e.pass) return false;
    return true;
}

namespace {

double rel_diff(const Tensor& a, const Tensor& b)
{
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
        scale = std::max(scale, std::abs(b.data[i]));
    }
    return diff / (scale + 1e-12);
}

Tensor transform_blocks(const Tensor& x, const Mat4& m)
{
    Tensor out(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c + 4 <= x.cols; c += 4)
            for (int a = 0; a < 4; ++a) {
                double s = 0.0;
                for (int b = 0; b < 4; ++b) s += m(a, b) * x(r, c + b);
                out(r, c + a) = s;
            }
    return out;
}

Tensor right_multiply(const Tensor& frames, const Mat4& m)
{
    Tensor out(frames.rows, 16);
    for (int r = 0; r < frames.rows; ++r) {
        Eigen::Map<const Mat4> f(frames.row(r));
        Eigen::Map<Mat4>(out.row(r)) = f * m;
    }
    return out;
}

} // namespace

std::vector<CheckEntry> check_equivariance(const LlocaTransformer& model, const Batch& batch, int trials,
                                           double beta_max, Rng& rng, double tolerance)
{
    const bool framed = model.frames_net() != nullptr;
    const FramesNet* net = model.frames_net();
    const bool vector_out = model.config().readout == Readout::EquivariantVector;

    auto run = [&](const Batch& b, Tensor* vectors, ForwardTrace* trace) {
        Tape t(false);
        if (vectors && net) *vectors = net->predict_vectors(t, b, model.policy().modified).value();
        return model.forward(t, b, nullptr, false, trace).value();
    };
    Tensor v0;
    ForwardTrace tr0;
    const Tensor y0 = run(batch, &v0, &tr0);

    double worst_vec = 0.0, worst_frame = 0.0, worst_local = 0.0, worst_att = 0.0, worst_out = 0.0;
    for (int k = 0; k < trials; ++k) {
        const LorentzMatrix l = random_lorentz_max_speed(rng, beta_max);
        Tensor v1;
        ForwardTrace tr1;
        const Tensor y1 = run(batch.transformed(l), &v1, &tr1);
        if (framed) {
            if (model.policy().kind != PolicyKind::GlobalCanonical) worst_vec = std::max(worst_vec, rel_diff(v1, transform_blocks(v0, l.m)));
            worst_frame = std::max(worst_frame, rel_diff(tr1.frames, right_multiply(tr0.frames, lorentz_inverse(l).m)));
            worst_local = std::max(worst_local, rel_diff(tr1.local_inputs, tr0.local_inputs));
            worst_att = std::max(worst_att, rel_diff(tr1.first_attention, tr0.first_attention));
        }
        const Tensor expect = vector_out ? transform_blocks(y0, l.m) : y0;
        if (vector_out) {
            worst_out = std::max(worst_out, rel_diff(y1, expect));
        } else {
            for (std::size_t i = 0; i < y1.size(); ++i)
                worst_out = std::max(worst_out, std::abs(y1.data[i] - y0.data[i]) / (std::abs(y0.data[i]) + 1e-12));
        }
    }
    std::vector<CheckEntry> out;
    if (framed) {
        if (model.policy().kind != PolicyKind::GlobalCanonical)
            out.push_back(make_entry("frames_net.vectors", "max_rel_violation", worst_vec, tolerance));
        out.push_back(make_entry("frames", "max_rel_violation", worst_frame, tolerance));
        out.push_back(make_entry("canonicalized_inputs", "max_rel_violation", worst_local, tolerance));
        out.push_back(make_entry("attention_weights", "max_rel_violation", worst_att, tolerance));
    }
    out.push_back(make_entry("output", "max_rel_violation", worst_out, tolerance));
    return out;
}

namespace {

using Op = std::function<Var(Tape&, const std::vector<Var>&)>;

struct Primitive {
    std::string name;
    std::function<std::vector<Tensor>(Rng&)> inputs;
    Op op;
};

Tensor uniform(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(r, c);
    for (double& v : t.data) v = u(rng);
    return t;
}

Tensor timelike(Rng& rng, int r)
{
    Tensor t(r, 4);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < r; ++i) {
        t(i, 1) = u(rng);
        t(i, 2) = u(rng);
        t(i, 3) = u(rng);
        t(i, 0) = 1.0 + std::abs(u(rng)) + std::sqrt(t(i, 1) * t(i, 1) + t(i, 2) * t(i, 2) + t(i, 3) * t(i, 3));
    }
    return t;
}

std::vector<Primitive> primitives()
{
    const RepSpec spec = RepSpec::parse("2x0+1x1+1x2");
    auto signs = std::make_shared<const std::vector<double>>(rep_metric_signs(RepSpec::parse("1x0+1x1")));
    auto index = std::make_shared<const std::vector<int>>(std::vector<int>{2, 0, 0, 3, 1});
    auto same = [](int r, int c, int n, double lo = -1.0, double hi = 1.0) {
        return [=](Rng& rng) {
            std::vector<Tensor> v;
            for (int i = 0; i < n; ++i) v.push_back(uniform(rng, r, c, lo, hi));
            return v;
        };
    };
    return {
        {"add", same(4, 3, 2), [](Tape&, auto& v) { return v[0] + v[1]; }},
        {"sub", same(4, 3, 2), [](Tape&, auto& v) { return v[0] - v[1]; }},
        {"mul", same(4, 3, 2), [](Tape&, auto& v) { return v[0] * v[1]; }},
        {"div", same(4, 3, 2, 0.5, 2.0), [](Tape&, auto& v) { return v[0] / v[1]; }},
        {"broadcast", [](Rng& r) { return std::vector<Tensor>{uniform(r, 4, 3), uniform(r, 4, 1), uniform(r, 1, 3)}; },
         [](Tape&, auto& v) { return (v[0] + v[1]) * v[2]; }},
        {"sqrt", same(4, 3, 1, 0.5, 2.0), [](Tape&, auto& v) { return ad::sqrt(v[0]); }},
        {"exp", same(4, 3, 1), [](Tape&, auto& v) { return ad::exp(v[0]); }},
        {"log", same(4, 3, 1, 0.5, 2.0), [](Tape&, auto& v) { return ad::log(v[0]); }},
        {"sum", same(4, 3, 1), [](Tape&, auto& v) { return ad::mul(ad::sum(v[0]), ad::sum(v[0])); }},
        {"group_sum", same(6, 3, 1), [](Tape&, auto& v) { return ad::group_sum(v[0], 3); }},
        {"gather_rows", same(4, 3, 1), [index](Tape&, auto& v) { return ad::gather_rows(v[0], index); }},
        {"concat", same(4, 3, 2), [](Tape&, auto& v) { return ad::concat_cols({v[1], v[0]}); }},
        {"slice", same(4, 5, 1), [](Tape&, auto& v) { return ad::slice_cols(v[0], 1, 3); }},
        {"matmul", [](Rng& r) { return std::vector<Tensor>{uniform(r, 4, 3), uniform(r, 3, 5)}; },
         [](Tape&, auto& v) { return ad::matmul(v[0], v[1]); }},
        {"softmax", same(3, 5, 1, -2.0, 2.0), [](Tape&, auto& v) { return ad::softmax(v[0]); }},
        {"group_softmax", same(6, 3, 1, -2.0, 2.0), [](Tape&, auto& v) { return ad::group_softmax(v[0], 3); }},
        {"gelu", same(5, 6, 1, -4.0, 4.0), [](Tape&, auto& v) { return ad::gelu(v[0]); }},
        {"relu", same(5, 6, 1, 0.2, 2.0), [](Tape&, auto& v) { return ad::relu(ad::add_scalar(v[0], -1.1)); }},
        {"layernorm", [](Rng& r) { return std::vector<Tensor>{uniform(r, 3, 6), uniform(r, 1, 6), uniform(r, 1, 6)}; },
         [](Tape&, auto& v) { return ad::layernorm(v[0], v[1], v[2]); }},
        {"mink_product", same(5, 4, 2), [](Tape&, auto& v) { return ad::mink_product(v[0], v[1]); }},
        {"cross_product", same(5, 3, 2), [](Tape&, auto& v) { return ad::cross_product(v[0], v[1]); }},
        {"boost_assembly", [](Rng& r) { return std::vector<Tensor>{timelike(r, 5)}; },
         [](Tape&, auto& v) { return ad::boost_assembly(v[0]); }},
        {"bmm4", same(3, 16, 2), [](Tape&, auto& v) { return ad::bmm4(v[0], v[1]); }},
        {"lorentz_inverse4", same(3, 16, 1), [](Tape&, auto& v) { return ad::lorentz_inverse4(v[0]); }},
        {"levi_civita", same(3, 4, 3), [](Tape&, auto& v) { return ad::levi_civita(v[0], v[1], v[2]); }},
        {"apply_rep_rows", [spec](Rng& r) { return std::vector<Tensor>{uniform(r, 3, 16), uniform(r, 3, 2 * spec.dimension())}; },
         [spec](Tape&, auto& v) { return ad::apply_rep_rows(v[0], v[1], spec); }},
        {"group_attention", same(6, 10, 3),
         [signs](Tape&, auto& v) { return ad::group_attention(v[0], v[1], v[2], 3, 2, signs); }},
        {"frame_pd", [](Rng& r) { return std::vector<Tensor>{timelike(r, 3), uniform(r, 3, 4), uniform(r, 3, 4)}; },
         [](Tape&, auto& v) { return build_frames(FrameConstructor::PD, v[0], v[1], v[2]); }},
        {"frame_gs4", [](Rng& r) { return std::vector<Tensor>{timelike(r, 3), uniform(r, 3, 4), uniform(r, 3, 4)}; },
         [](Tape&, auto& v) { return build_frames(FrameConstructor::GS4, v[0], v[1], v[2]); }},
    };
}

/// Worst relative error over all entries of `params` for the scalar f.
double fd_error(ad::ParameterSet& params, const std::function<Var(Tape&)>& f, const std::vector<std::pair<std::size_t, std::size_t>>& entries)
{
    constexpr double h = 1e-5;
    params.zero_grad();
    double floor = 1e-8;
    {
        Tape t;
        const Var loss = f(t);
        floor = std::max(floor, 1e-5 * std::abs(loss.item()));
        t.backward(loss);
    }
    double worst = 0.0;
    for (auto [pi, ei] : entries) {
        ad::Parameter& p = params[pi];
        const double keep = p.value.data[ei];
        auto eval = [&](double x) {
            p.value.data[ei] = x;
            Tape t(false);
            return f(t).item();
        };
        const double numeric = (eval(keep + h) - eval(keep - h)) / (2.0 * h);
        p.value.data[ei] = keep;
        worst = std::max(worst, std::abs(p.grad.data[ei] - numeric) / (std::abs(numeric) + floor));
    }
    return worst;
}

std::vector<std::pair<std::size_t, std::size_t>> every_entry(const ad::ParameterSet& ps)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t p = 0; p < ps.size(); ++p)
        for (std::size_t e = 0; e < ps[p].value.size(); ++e) out.emplace_back(p, e);
    return out;
}

} // namespace

std::vector<CheckEntry> check_gradients(int trials, Rng& rng, double tolerance)
{
    std::vector<CheckEntry> out;
    for (const Primitive& prim : primitives()) {
        double worst = 0.0;
        for (int k = 0; k < trials; ++k) {
            ad::ParameterSet ps;
            const std::vector<Tensor> in = prim.inputs(rng);
            for (std::size_t i = 0; i < in.size(); ++i) ps.add("x" + std::to_string(i), in[i]);
            auto vars = [&](Tape& t) {
                std::vector<Var> v;
                for (auto& p : ps) v.push_back(t.param(p));
                return v;
            };
            Tensor w;
            {
                Tape t(false);
                const Tensor& y = prim.op(t, vars(t)).value();
                w = uniform(rng, y.rows, y.cols, 0.5, 1.5);
            }
            worst = std::max(worst, fd_error(ps, [&](Tape& t) { return ad::sum(ad::mul(prim.op(t, vars(t)), t.constant(w))); },
                                             every_entry(ps)));
        }
        out.push_back(make_entry("primitive." + prim.name, "max_rel_error", worst, tolerance));
    }

    double worst = 0.0;
    for (int k = 0; k < trials; ++k) {
        ModelConfig cfg;
        cfg.hidden_dim = 32;
        cfg.num_heads = 2;
        cfg.num_blocks = 1;
        cfg.mlp_ratio = 2;
        LlocaTransformer model(cfg, FramePolicy::parse("learned-pd"), {16, 2, {}}, 6, rng);
        std::vector<ParticleSet> sets;
        for (int e = 0; e < 3; ++e) sets.push_back(generate_event(rng, {}).particles);
        const Batch b = Batch::from_sets(sets);
        const Tensor y = uniform(rng, 3, 1);
        auto entries = every_entry(model.params());
        std::shuffle(entries.begin(), entries.end(), rng);
        entries.resize(std::min<std::size_t>(entries.size(), 40));
        worst = std::max(worst, fd_error(model.params(), [&](Tape& t) { return ad::mse(model.forward(t, b), t.constant(y)); },
                                         entries));
    }
    out.push_back(make_entry("end_to_end", "max_rel_error", worst, tolerance));
    return out;
}

} // namespace lloca
