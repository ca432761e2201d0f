#include "lloca/model.hpp"

#include "lloca/errors.hpp"
#include "lloca/frame_ops.hpp"
#include "lloca/ops.hpp"

namespace lloca {

using ad::Tensor;
using ad::Var;

AttentionMetric parse_attention_metric(std::string_view s)
{
    if (s == "minkowski") return AttentionMetric::Minkowski;
    if (s == "euclidean") return AttentionMetric::Euclidean;
    throw ConfigError("unknown attention metric '" + std::string(s) + "'");
}

Readout parse_readout(std::string_view s)
{
    if (s == "invariant-scalar") return Readout::InvariantScalar;
    if (s == "equivariant-vector") return Readout::EquivariantVector;
    throw ConfigError("unknown readout '" + std::string(s) + "'");
}

std::string to_string(AttentionMetric m) { return m == AttentionMetric::Minkowski ? "minkowski" : "euclidean"; }
std::string to_string(Readout r) { return r == Readout::InvariantScalar ? "invariant-scalar" : "equivariant-vector"; }

void ModelConfig::validate() const
{
    if (hidden_dim <= 0 || num_heads <= 0 || num_blocks < 0 || mlp_ratio <= 0)
        throw ConfigError("model sizes must be positive");
    if (hidden_dim % num_heads != 0) throw ConfigError("hidden_dim must be divisible by num_heads");
    if (head_spec.dimension() != hidden_dim / num_heads)
        throw ConfigError("head spec " + head_spec.to_string() + " has dimension " +
                          std::to_string(head_spec.dimension()) + ", heads need " +
                          std::to_string(hidden_dim / num_heads));
}

// ---------------------------------------------------------------- canonicalization

namespace {

void check_features(std::span<const TensorFeature> f, std::span<const LocalFrame> frames, const RepSpec& spec)
{
    if (f.size() != frames.size()) throw DimensionError("one frame per feature is required");
    for (const TensorFeature& x : f)
        if (!(x.spec == spec) || static_cast<int>(x.values.size()) != spec.dimension())
            throw DimensionError("feature does not match rep spec " + spec.to_string());
}

} // namespace

std::vector<TensorFeature> canonicalize(std::span<const TensorFeature> features, std::span<const LocalFrame> frames,
                                        const RepSpec& spec)
{
    check_features(features, frames, spec);
    std::vector<TensorFeature> out;
    out.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) out.push_back(apply_rep(frames[i].L, features[i]));
    return out;
}

std::vector<TensorFeature> decanonicalize(std::span<const TensorFeature> local, std::span<const LocalFrame> frames,
                                          const RepSpec& spec)
{
    check_features(local, frames, spec);
    std::vector<TensorFeature> out;
    out.reserve(local.size());
    for (std::size_t i = 0; i < local.size(); ++i) out.push_back(apply_rep(lorentz_inverse(frames[i].L), local[i]));
    return out;
}

Eigen::MatrixXd frame_transport(const LocalFrame& li, const LocalFrame& lj, const RepSpec& spec)
{
    return rep_matrix(li.L * lorentz_inverse(lj.L), spec);
}

// ---------------------------------------------------------------- attention

Var frame_attention(Var q, Var k, Var v, const Var* frames, int group, int heads, const RepSpec& spec,
                    AttentionMetric metric, Tensor* weights)
{
    if (q.cols() != heads * spec.dimension())
        throw DimensionError("attention width " + std::to_string(q.cols()) + " != heads x " + spec.to_string());
    auto signs = std::make_shared<const std::vector<double>>(
        metric == AttentionMetric::Minkowski ? rep_metric_signs(spec)
                                             : std::vector<double>(static_cast<std::size_t>(spec.dimension()), 1.0));
    if (!frames) {
        if (weights) *weights = ad::group_attention_weights(q.value(), k.value(), group, heads, *signs);
        return ad::group_attention(q, k, v, group, heads, signs);
    }
    Var inv = ad::lorentz_inverse4(*frames);
    // Euclidean logits q^T rho(L_i) rho(L_j^-1) k need rho(L_i)^T q on the query side.
    Var qm = metric == AttentionMetric::Minkowski ? inv : ad::transpose4(*frames);
    Var qg = ad::apply_rep_rows(qm, q, spec);
    Var kg = ad::apply_rep_rows(inv, k, spec);
    Var vg = ad::apply_rep_rows(inv, v, spec);
    if (weights) *weights = ad::group_attention_weights(qg.value(), kg.value(), group, heads, *signs);
    return ad::apply_rep_rows(*frames, ad::group_attention(qg, kg, vg, group, heads, signs), spec);
}

std::vector<std::vector<double>> mink_attention(const std::vector<std::vector<double>>& q,
                                                const std::vector<std::vector<double>>& k,
                                                const std::vector<std::vector<double>>& v,
                                                std::span<const LocalFrame> frames, const RepSpec& spec,
                                                AttentionMetric metric)
{
    const int n = static_cast<int>(q.size());
    const int d = spec.dimension();
    if (k.size() != q.size() || v.size() != q.size() || frames.size() != q.size())
        throw DimensionError("mink_attention: q, k, v and frames need one entry per particle");
    auto pack = [&](const std::vector<std::vector<double>>& rows) {
        Tensor t(n, d);
        for (int i = 0; i < n; ++i) {
            if (static_cast<int>(rows[i].size()) != d) throw DimensionError("mink_attention: row length != spec dimension");
            std::copy(rows[i].begin(), rows[i].end(), t.row(i));
        }
        return t;
    };
    std::vector<LorentzMatrix> mats;
    for (const LocalFrame& f : frames) mats.push_back(f.L);
    ad::Tape t(false);
    Var fr = t.constant(frames_to_tensor(mats));
    Var out = frame_attention(t.constant(pack(q)), t.constant(pack(k)), t.constant(pack(v)), &fr, n, 1, spec, metric);
    std::vector<std::vector<double>> res(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) res[i].assign(out.value().row(i), out.value().row(i) + d);
    return res;
}

// ---------------------------------------------------------------- message passing

TensorialMessageLayer::TensorialMessageLayer(ad::ParameterSet& params, const std::string& name, int feature_dim,
                                             RepSpec message_spec, int hidden, int out_dim, Rng& rng)
    : spec_(std::move(message_spec))
{
    message_ = nn::Linear::create(params, name + ".message", feature_dim, spec_.dimension(), rng);
    phi_ = nn::Mlp::create(params, name + ".phi", {spec_.dimension(), hidden, hidden}, rng);
    psi_ = nn::Mlp::create(params, name + ".psi", {feature_dim + hidden, hidden, out_dim}, rng);
}

Var TensorialMessageLayer::operator()(ad::Tape& t, Var features, const Var* frames, int group) const
{
    const int rows = features.rows();
    if (group <= 0 || rows % group != 0) throw DimensionError("message layer: rows not divisible by group");
    if (features.cols() != message_.in()) throw DimensionError("message layer: feature width mismatch");
    auto senders = std::make_shared<std::vector<int>>();
    senders->reserve(static_cast<std::size_t>(rows) * group);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < group; ++j) senders->push_back((r / group) * group + j);
    Var msg = ad::gather_rows(message_(t, features), senders);
    if (frames) {
        Var li = ad::repeat_rows(*frames, group);
        Var lj = ad::gather_rows(*frames, senders);
        msg = ad::apply_rep_rows(ad::bmm4(li, ad::lorentz_inverse4(lj)), msg, spec_);
    }
    Var agg = ad::group_sum(phi_(t, msg), group);
    return psi_(t, ad::concat_cols({features, agg}));
}

// ---------------------------------------------------------------- transformer

LlocaTransformer::LlocaTransformer(ModelConfig cfg, FramePolicy policy, FramesNetConfig frames_cfg, int n_scalars,
                                   Rng& rng)
    : cfg_(std::move(cfg)), policy_(policy), n_scalars_(n_scalars)
{
    cfg_.validate();
    if (policy_.uses_frames_net()) {
        frames_net_ = std::make_unique<FramesNet>(params_, n_scalars, std::move(frames_cfg), rng);
        if (policy_.kind == PolicyKind::Fixed) frames_net_->set_trainable(false);
    }
    const int h = cfg_.hidden_dim;
    embed_ = nn::Linear::create(params_, "embed", 4 + n_scalars, h, rng);
    for (int b = 0; b < cfg_.num_blocks; ++b) {
        const std::string p = "block" + std::to_string(b);
        Block blk;
        blk.ln1 = nn::LayerNorm::create(params_, p + ".ln1", h);
        blk.qkv = nn::Linear::create(params_, p + ".qkv", h, 3 * h, rng);
        blk.out = nn::Linear::create(params_, p + ".out", h, h, rng);
        blk.ln2 = nn::LayerNorm::create(params_, p + ".ln2", h);
        blk.mlp = nn::Mlp::create(params_, p + ".mlp", {h, cfg_.mlp_ratio * h, h}, rng);
        blocks_.push_back(blk);
    }
    final_ln_ = nn::LayerNorm::create(params_, "final_ln", h);
    const int out = cfg_.readout == Readout::InvariantScalar ? 1 : 4;
    head_ = nn::Mlp::create(params_, "head", {h, h, out}, rng);
}

Var LlocaTransformer::frames(ad::Tape& t, const Batch& b, Rng* rng, bool training) const
{
    if (frames_net_) return frames_net_->predict_frames(t, b, policy_, rng, training);
    return network_free_frames(t, b, policy_, rng, training);
}

Var LlocaTransformer::forward(ad::Tape& t, const Batch& b, Rng* rng, bool training, ForwardTrace* trace) const
{
    Var f = frames(t, b, rng, training);
    return forward_with_frames(t, b, &f, trace);
}

Var LlocaTransformer::forward_with_frames(ad::Tape& t, const Batch& b, const Var* frames, ForwardTrace* trace) const
{
    if (b.n_scalars != n_scalars_) throw ShapeError("model: scalar width differs from construction");
    const int n = b.particles;
    const int h = cfg_.hidden_dim;
    Var p = t.constant(b.momenta);
    Var local_p = frames ? ad::bmv4(*frames, p) : p;
    Var x = ad::concat_cols({local_p, t.constant(b.scalars)});
    if (trace) {
        trace->frames = frames ? frames->value() : Tensor();
        trace->local_inputs = x.value();
    }
    Var hid = embed_(t, x);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        const Block& blk = blocks_[k];
        Var qkv = blk.qkv(t, blk.ln1(t, hid));
        Var att = frame_attention(ad::slice_cols(qkv, 0, h), ad::slice_cols(qkv, h, h), ad::slice_cols(qkv, 2 * h, h),
                                  frames, n, cfg_.num_heads, cfg_.head_spec, cfg_.metric,
                                  trace && k == 0 ? &trace->first_attention : nullptr);
        hid = hid + blk.out(t, att);
        hid = hid + blk.mlp(t, blk.ln2(t, hid));
    }
    Var z = final_ln_(t, hid);
    if (cfg_.readout == Readout::InvariantScalar) return head_(t, ad::scale(ad::group_sum(z, n), 1.0 / n));
    Var v = head_(t, z);
    return frames ? ad::bmv4(ad::lorentz_inverse4(*frames), v) : v;
}

Tensor LlocaTransformer::predict(const Batch& b) const
{
    ad::Tape t(false);
    return forward(t, b).value();
}

} // namespace lloca
