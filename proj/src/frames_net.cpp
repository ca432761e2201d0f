#include "lloca/frames_net.hpp"

#include <cmath>

#include "lloca/errors.hpp"
#include "lloca/ops.hpp"

namespace lloca {

using ad::Tensor;
using ad::Var;

FramePolicy FramePolicy::parse(std::string_view name)
{
    FramePolicy p;
    if (name == "learned-pd") {
        p.constructor = FrameConstructor::PD;
    } else if (name == "learned-gs4") {
        p.constructor = FrameConstructor::GS4;
    } else if (name == "learned-so3") {
        p.constructor = FrameConstructor::SO3;
    } else if (name == "identity") {
        p.kind = PolicyKind::Identity;
    } else if (name == "augment") {
        p.kind = PolicyKind::Augment;
    } else if (name == "global") {
        p.kind = PolicyKind::GlobalCanonical;
    } else if (name == "fixed") {
        p.kind = PolicyKind::Fixed;
    } else {
        throw ConfigError("unknown frame policy '" + std::string(name) + "'");
    }
    return p;
}

std::string FramePolicy::name() const
{
    switch (kind) {
    case PolicyKind::Learned: return "learned-" + to_string(constructor);
    case PolicyKind::Identity: return "identity";
    case PolicyKind::Augment: return "augment";
    case PolicyKind::GlobalCanonical: return "global";
    case PolicyKind::Fixed: return "fixed";
    }
    return "?";
}

struct FramesNet::Pairs {
    int events = 0;
    int receivers = 0; // per event
    int senders = 0;   // per receiver
    Tensor features;   // (events*receivers*senders, 2*width+1)
    Tensor sums;       // (events*receivers*senders, 4): p_i + p_j
};

FramesNet::FramesNet(ad::ParameterSet& params, int n_scalars, FramesNetConfig cfg, Rng& rng)
    : cfg_(std::move(cfg)), n_scalars_(n_scalars)
{
    if (cfg_.hidden <= 0 || cfg_.layers < 1) throw ConfigError("frames net needs a positive width and depth");
    const int width = n_scalars_ + (cfg_.references.empty() ? 0 : 1);
    std::vector<int> widths{2 * width + 1};
    for (int l = 0; l < cfg_.layers; ++l) widths.push_back(cfg_.hidden);
    widths.push_back(3);
    phi_ = nn::Mlp::create(params, "frames.phi", widths, rng);
}

namespace {

void check_particles(const Batch& b)
{
    if (b.particles < 1) throw DomainError("frames net: empty particle set");
    for (int r = 0; r < b.rows(); ++r) {
        const double* p = b.momenta.row(r);
        const double m2 = p[0] * p[0] - p[1] * p[1] - p[2] * p[2] - p[3] * p[3];
        if (!(p[0] > 0.0) || !(m2 >= -1e-12 * p[0] * p[0]))
            throw DomainError("frames net: momenta must have positive energy and non-negative mass squared");
    }
}

double mink(const double* a, const double* b) { return a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]; }

// Fills one pair row: [s_i, flag_i, s_j, flag_j, <p_i,p_j>] and p_i + p_j.
void fill_pair(double* feat, double* sum, int n_scalars, bool flagged, const double* si, double flag_i,
               const double* sj, double flag_j, const double* pi, const double* pj)
{
    const int w = n_scalars + (flagged ? 1 : 0);
    std::copy(si, si + n_scalars, feat);
    std::copy(sj, sj + n_scalars, feat + w);
    if (flagged) {
        feat[n_scalars] = flag_i;
        feat[w + n_scalars] = flag_j;
    }
    feat[2 * w] = mink(pi, pj);
    for (int mu = 0; mu < 4; ++mu) sum[mu] = pi[mu] + pj[mu];
}

} // namespace

FramesNet::Pairs FramesNet::particle_pairs(const Batch& b) const
{
    check_particles(b);
    if (b.n_scalars != n_scalars_) throw ShapeError("frames net: scalar width differs from construction");
    const bool flagged = !cfg_.references.empty();
    const int nref = static_cast<int>(cfg_.references.size());
    const int w = n_scalars_ + (flagged ? 1 : 0);
    Pairs p;
    p.events = b.events;
    p.receivers = b.particles;
    p.senders = b.particles + nref;
    const int rows = b.rows() * p.senders;
    p.features = Tensor(rows, 2 * w + 1);
    p.sums = Tensor(rows, 4);
    const std::vector<double> ref_scalars(static_cast<std::size_t>(n_scalars_), 0.0);
    int r = 0;
    for (int e = 0; e < b.events; ++e)
        for (int i = 0; i < b.particles; ++i) {
            const int ri = e * b.particles + i;
            for (int j = 0; j < p.senders; ++j, ++r) {
                if (j < b.particles) {
                    const int rj = e * b.particles + j;
                    fill_pair(p.features.row(r), p.sums.row(r), n_scalars_, flagged, b.scalars.row(ri), 0.0,
                              b.scalars.row(rj), 0.0, b.momenta.row(ri), b.momenta.row(rj));
                } else {
                    fill_pair(p.features.row(r), p.sums.row(r), n_scalars_, flagged, b.scalars.row(ri), 0.0,
                              ref_scalars.data(), 1.0, b.momenta.row(ri), cfg_.references[j - b.particles].c.data());
                }
            }
        }
    return p;
}

FramesNet::Pairs FramesNet::set_pairs(const Batch& b) const
{
    check_particles(b);
    if (b.n_scalars != n_scalars_) throw ShapeError("frames net: scalar width differs from construction");
    const bool flagged = !cfg_.references.empty();
    const int nref = static_cast<int>(cfg_.references.size());
    const int w = n_scalars_ + (flagged ? 1 : 0);
    Pairs p;
    p.events = b.events;
    p.receivers = 1;
    p.senders = b.particles + nref;
    p.features = Tensor(b.events * p.senders, 2 * w + 1);
    p.sums = Tensor(b.events * p.senders, 4);
    const std::vector<double> ref_scalars(static_cast<std::size_t>(n_scalars_), 0.0);
    std::vector<double> mean_s(static_cast<std::size_t>(n_scalars_));
    int r = 0;
    for (int e = 0; e < b.events; ++e) {
        double total[4] = {0, 0, 0, 0};
        std::fill(mean_s.begin(), mean_s.end(), 0.0);
        for (int i = 0; i < b.particles; ++i) {
            const int ri = e * b.particles + i;
            for (int mu = 0; mu < 4; ++mu) total[mu] += b.momenta(ri, mu);
            for (int s = 0; s < n_scalars_; ++s) mean_s[s] += b.scalars(ri, s) / b.particles;
        }
        for (int j = 0; j < p.senders; ++j, ++r) {
            if (j < b.particles) {
                const int rj = e * b.particles + j;
                fill_pair(p.features.row(r), p.sums.row(r), n_scalars_, flagged, mean_s.data(), 0.0,
                          b.scalars.row(rj), 0.0, total, b.momenta.row(rj));
            } else {
                fill_pair(p.features.row(r), p.sums.row(r), n_scalars_, flagged, mean_s.data(), 0.0,
                          ref_scalars.data(), 1.0, total, cfg_.references[j - b.particles].c.data());
            }
        }
    }
    return p;
}

Var FramesNet::weighted(ad::Tape& t, const Pairs& p, bool modified) const
{
    Var weights = ad::group_softmax(phi_(t, t.constant(p.features)), p.senders);
    Tensor dirs = p.sums;
    if (modified) {
        for (int r = 0; r < dirs.rows; ++r) {
            double* d = dirs.row(r);
            const double n2 = mink(d, d);
            // A null pair sum (e.g. a massless self pair) carries no direction.
            const double s = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
            for (int mu = 0; mu < 4; ++mu) d[mu] *= s;
        }
    }
    Var v = ad::group_weighted_vectors(weights, t.constant(std::move(dirs)), p.senders);
    if (!modified) return v;
    std::vector<Var> parts;
    for (int k = 0; k < 3; ++k) {
        Var vk = ad::slice_cols(v, 4 * k, 4);
        Var norm = ad::repeat_rows(ad::sqrt(ad::group_sum(ad::mink_product(vk, vk), p.receivers)), p.receivers);
        parts.push_back(vk / norm);
    }
    return ad::concat_cols(parts);
}

Var FramesNet::predict_vectors(ad::Tape& t, const Batch& b, bool modified) const
{
    return weighted(t, particle_pairs(b), modified);
}

Var FramesNet::predict_set_vectors(ad::Tape& t, const Batch& b, bool modified) const
{
    return weighted(t, set_pairs(b), modified);
}

Tensor FramesNet::sender_weights(const Batch& b) const
{
    ad::Tape t(false);
    const Pairs p = particle_pairs(b);
    return ad::group_softmax(phi_(t, t.constant(p.features)), p.senders).value();
}

Var FramesNet::predict_frames(ad::Tape& t, const Batch& b, const FramePolicy& policy, Rng* rng, bool training) const
{
    switch (policy.kind) {
    case PolicyKind::Identity:
    case PolicyKind::Augment: return network_free_frames(t, b, policy, rng, training);
    case PolicyKind::GlobalCanonical: {
        Var v = predict_set_vectors(t, b, policy.modified);
        Var f = build_frames(policy.constructor, ad::slice_cols(v, 0, 4), ad::slice_cols(v, 4, 4), ad::slice_cols(v, 8, 4));
        return ad::repeat_rows(f, b.particles);
    }
    case PolicyKind::Learned:
    case PolicyKind::Fixed: {
        Var v = predict_vectors(t, b, policy.modified);
        return build_frames(policy.constructor, ad::slice_cols(v, 0, 4), ad::slice_cols(v, 4, 4), ad::slice_cols(v, 8, 4));
    }
    }
    throw ConfigError("unknown frame policy");
}

Var network_free_frames(ad::Tape& t, const Batch& b, const FramePolicy& policy, Rng* rng, bool training)
{
    if (policy.uses_frames_net()) throw ConfigError("policy " + policy.name() + " needs a frames net");
    if (policy.kind == PolicyKind::Identity || !training || !rng) return t.constant(identity_frames(b.rows()));
    std::vector<LorentzMatrix> frames(static_cast<std::size_t>(b.rows()));
    for (int e = 0; e < b.events; ++e) {
        const LorentzMatrix rot = policy.augment_rotate ? random_rotation(*rng) : LorentzMatrix::identity();
        const LorentzMatrix lambda = rot * random_boost(*rng, policy.augment_sigma, policy.augment_clip);
        for (int i = 0; i < b.particles; ++i) frames[static_cast<std::size_t>(e * b.particles + i)] = lambda;
    }
    return t.constant(frames_to_tensor(frames));
}

} // namespace lloca
