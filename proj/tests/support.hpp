#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lloca/autodiff.hpp"
#include "lloca/frames.hpp"
#include "lloca/minkowski.hpp"
#include "lloca/tensor_rep.hpp"

namespace testing {

using lloca::FourVector;
using lloca::Rng;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Timelike, future-directed vector with |beta| < max_speed.
inline FourVector random_timelike(Rng& rng, double max_speed = 0.9)
{
    const double m = uniform(rng, 0.5, 2.0);
    double b[3];
    double n2;
    do {
        for (double& c : b) c = uniform(rng, -max_speed, max_speed);
        n2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
    } while (n2 >= max_speed * max_speed);
    const double gamma = 1.0 / std::sqrt(1.0 - n2);
    return {gamma * m, gamma * m * b[0], gamma * m * b[1], gamma * m * b[2]};
}

inline FourVector random_vector(Rng& rng) { return {normal(rng), normal(rng), normal(rng), normal(rng)}; }

struct Triple {
    FourVector v0, v1, v2;
};

/// Admissible input for the frame constructors (v0 timelike, generic v1, v2).
inline Triple random_triple(Rng& rng) { return {random_timelike(rng), random_vector(rng), random_vector(rng)}; }

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

/// Direct double-loop evaluation of tensorial attention for one head:
/// out_i = sum_j softmax_j(<q_i, rho(L_i L_j^-1) k_j> / sqrt(d)) rho(L_i L_j^-1) v_j.
inline std::vector<std::vector<double>> direct_attention(const std::vector<std::vector<double>>& q,
                                                         const std::vector<std::vector<double>>& k,
                                                         const std::vector<std::vector<double>>& v,
                                                         const std::vector<lloca::LocalFrame>& frames,
                                                         const lloca::RepSpec& spec, bool minkowski)
{
    const std::size_t n = q.size();
    const int d = spec.dimension();
    const Eigen::MatrixXd g = minkowski ? lloca::rep_metric(spec) : Eigen::MatrixXd::Identity(d, d);
    std::vector<std::vector<double>> out(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Map<const Eigen::VectorXd> qi(q[i].data(), d);
        std::vector<Eigen::VectorXd> moved_v;
        std::vector<double> logits;
        for (std::size_t j = 0; j < n; ++j) {
            const Eigen::MatrixXd t =
                lloca::rep_matrix(frames[i].L * lloca::lorentz_inverse(frames[j].L), spec);
            const Eigen::VectorXd kj = t * Eigen::Map<const Eigen::VectorXd>(k[j].data(), d);
            logits.push_back(qi.dot(g * kj) / std::sqrt(static_cast<double>(d)));
            moved_v.push_back(t * Eigen::Map<const Eigen::VectorXd>(v[j].data(), d));
        }
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t j = 0; j < n; ++j)
            for (int c = 0; c < d; ++c) out[i][c] += logits[j] / z * moved_v[j](c);
    }
    return out;
}

/// Central-difference check of d f / d p for every entry of the listed
/// parameters. Returns the worst |analytic - numeric| / (|numeric| + floor)
/// with floor = max(1e-8, 1e-5 |f|), the scale of the rounding noise
/// eps |f| / h in the numeric derivative.
inline double gradient_error(lloca::ad::ParameterSet& params, const std::function<lloca::ad::Var(lloca::ad::Tape&)>& f,
                             const std::vector<std::pair<std::size_t, std::size_t>>& entries, double h = 1e-5)
{
    params.zero_grad();
    double floor = 1e-8;
    {
        lloca::ad::Tape t;
        const lloca::ad::Var loss = f(t);
        floor = std::max(floor, 1e-5 * std::abs(loss.item()));
        t.backward(loss);
    }
    double worst = 0.0;
    for (auto [pi, ei] : entries) {
        auto& p = params[pi];
        const double analytic = p.grad.data[ei];
        const double keep = p.value.data[ei];
        auto eval = [&](double v) {
            p.value.data[ei] = v;
            lloca::ad::Tape t(false);
            return f(t).item();
        };
        const double numeric = (eval(keep + h) - eval(keep - h)) / (2.0 * h);
        p.value.data[ei] = keep;
        worst = std::max(worst, std::abs(analytic - numeric) / (std::abs(numeric) + floor));
    }
    return worst;
}

/// Every entry of every parameter.
inline std::vector<std::pair<std::size_t, std::size_t>> all_entries(const lloca::ad::ParameterSet& params)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t e = 0; e < params[p].value.size(); ++e) out.emplace_back(p, e);
    return out;
}

} // namespace testing

#include "lloca/particles.hpp"
#include "lloca/toy_task.hpp"

namespace testing {

/// Toy-task events (massive, one-hot index scalars) as one batch.
inline lloca::Batch random_batch(Rng& rng, int events, int particles = 6)
{
    lloca::TaskConfig cfg;
    cfg.n_particles = particles;
    std::vector<lloca::ParticleSet> sets;
    for (int e = 0; e < events; ++e) sets.push_back(lloca::generate_event(rng, cfg).particles);
    return lloca::Batch::from_sets(sets);
}

/// Max |a - b| / (1 + max |b|).
inline double rel_diff(const lloca::ad::Tensor& a, const lloca::ad::Tensor& b)
{
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
        scale = std::max(scale, std::abs(b.data[i]));
    }
    return diff / (1.0 + scale);
}

/// Applies lambda to every 4-column block of every row.
inline lloca::ad::Tensor transform_rows(const lloca::ad::Tensor& x, const lloca::LorentzMatrix& lambda)
{
    lloca::ad::Tensor out = x;
    for (int r = 0; r < x.rows; ++r)
        for (int blk = 0; blk + 4 <= x.cols; blk += 4) {
            const lloca::FourVector p{x(r, blk), x(r, blk + 1), x(r, blk + 2), x(r, blk + 3)};
            const lloca::FourVector q = lambda * p;
            for (int mu = 0; mu < 4; ++mu) out(r, blk + mu) = q[mu];
        }
    return out;
}

} // namespace testing
