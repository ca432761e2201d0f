#include <cmath>
#include <numeric>

#include "doctest.h"
#include "lloca/errors.hpp"
#include "lloca/model.hpp"
#include "lloca/ops.hpp"
#include "support.hpp"

using namespace lloca;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

std::vector<LocalFrame> random_frames(Rng& rng, int n)
{
    std::vector<LocalFrame> f;
    for (int i = 0; i < n; ++i) f.push_back({random_lorentz_max_speed(rng, 0.9)});
    return f;
}

std::vector<std::vector<double>> random_rows(Rng& rng, int n, int d)
{
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& r : rows)
        for (double& v : r) v = testing::normal(rng);
    return rows;
}

double max_row_diff(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t c = 0; c < a[i].size(); ++c) m = std::max(m, std::abs(a[i][c] - b[i][c]));
    return m;
}

ModelConfig small_config(const char* spec = "8x0+2x1")
{
    ModelConfig cfg;
    cfg.head_spec = RepSpec::parse(spec);
    cfg.num_heads = 2;
    cfg.hidden_dim = 2 * cfg.head_spec.dimension();
    cfg.num_blocks = 2;
    cfg.mlp_ratio = 2;
    return cfg;
}

Tensor to_tensor(std::span<const LocalFrame> frames)
{
    std::vector<LorentzMatrix> m;
    for (const auto& f : frames) m.push_back(f.L);
    return frames_to_tensor(m);
}

} // namespace

TEST_CASE("config validation and parsing")
{
    ModelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.hidden_dim = 100;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_attention_metric("euclidean") == AttentionMetric::Euclidean);
    CHECK(parse_readout("equivariant-vector") == Readout::EquivariantVector);
    CHECK(to_string(AttentionMetric::Minkowski) == "minkowski");
    CHECK(to_string(Readout::InvariantScalar) == "invariant-scalar");
    CHECK_THROWS_AS(parse_attention_metric("cosine"), ConfigError);
}

TEST_CASE("canonicalization")
{
    Rng rng(1);
    const RepSpec spec = RepSpec::parse("2x0+1x1+1x2");
    const int n = 5;
    std::vector<TensorFeature> feats;
    for (const auto& r : random_rows(rng, n, spec.dimension())) feats.emplace_back(r, spec);
    const auto frames = random_frames(rng, n);

    const std::vector<LocalFrame> ids(n);
    const auto same = canonicalize(feats, ids, spec);
    for (int i = 0; i < n; ++i) CHECK(same[i].values == feats[i].values);

    const auto local = canonicalize(feats, frames, spec);
    const auto back = decanonicalize(local, frames, spec);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < spec.dimension(); ++c) CHECK(std::abs(back[i].values[c] - feats[i].values[c]) < 1e-11);

    std::vector<TensorFeature> scalars;
    for (const auto& r : random_rows(rng, n, 3)) scalars.emplace_back(r, RepSpec::scalars(3));
    const auto s = canonicalize(scalars, frames, RepSpec::scalars(3));
    for (int i = 0; i < n; ++i) CHECK(s[i].values == scalars[i].values);

    // Globally transformed inputs with L -> L lambda^-1 give the same local features.
    const LorentzMatrix l = random_lorentz_max_speed(rng, 0.9);
    std::vector<TensorFeature> moved;
    std::vector<LocalFrame> moved_frames;
    for (int i = 0; i < n; ++i) {
        moved.push_back(apply_rep(l, feats[i]));
        moved_frames.push_back({frames[i].L * lorentz_inverse(l)});
    }
    const auto local2 = canonicalize(moved, moved_frames, spec);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < spec.dimension(); ++c)
            CHECK(std::abs(local2[i].values[c] - local[i].values[c]) < 1e-9 * (1 + std::abs(local[i].values[c])));

    CHECK_THROWS_AS(canonicalize(feats, std::vector<LocalFrame>(n), RepSpec::scalars(2)), DimensionError);
}

TEST_CASE("frame transport")
{
    Rng rng(2);
    const RepSpec spec = RepSpec::parse("1x0+1x1+1x2");
    const auto f = random_frames(rng, 2);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(spec.dimension(), spec.dimension());
    CHECK((frame_transport(f[0], f[0], spec) - eye).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((frame_transport(f[0], f[1], RepSpec::scalars(3)) - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() ==
          0.0);
    const Eigen::MatrixXd t = frame_transport(f[0], f[1], spec);
    CHECK((t - rep_matrix(f[0].L * lorentz_inverse(f[1].L), spec)).cwiseAbs().maxCoeff() == 0.0);
    for (int trial = 0; trial < 100; ++trial) {
        const LorentzMatrix l = random_lorentz_max_speed(rng, 0.9);
        const LorentzMatrix li = lorentz_inverse(l);
        const Eigen::MatrixXd moved = frame_transport({f[0].L * li}, {f[1].L * li}, spec);
        CHECK((moved - t).cwiseAbs().maxCoeff() < 1e-9 * (1 + t.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("fast attention path agrees with the direct double loop")
{
    Rng rng(3);
    const RepSpec spec = RepSpec::parse("8x0+2x1");
    for (AttentionMetric metric : {AttentionMetric::Minkowski, AttentionMetric::Euclidean}) {
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 2 + trial % 7;
            const auto q = random_rows(rng, n, 16), k = random_rows(rng, n, 16), v = random_rows(rng, n, 16);
            const auto frames = random_frames(rng, n);
            const auto fast = mink_attention(q, k, v, frames, spec, metric);
            const auto direct =
                testing::direct_attention(q, k, v, frames, spec, metric == AttentionMetric::Minkowski);
            CHECK(max_row_diff(fast, direct) < 1e-10);
        }
    }
}

TEST_CASE("attention with identity frames is plain attention")
{
    Rng rng(4);
    const RepSpec spec = RepSpec::scalars(8);
    const int n = 5;
    const auto q = random_rows(rng, n, 8), k = random_rows(rng, n, 8), v = random_rows(rng, n, 8);
    const auto out = mink_attention(q, k, v, std::vector<LocalFrame>(n), spec, AttentionMetric::Euclidean);
    for (int i = 0; i < n; ++i) {
        std::vector<double> logits(n), ref(8, 0.0);
        for (int j = 0; j < n; ++j)
            logits[j] = std::inner_product(q[i].begin(), q[i].end(), k[j].begin(), 0.0) / std::sqrt(8.0);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (int j = 0; j < n; ++j)
            for (int c = 0; c < 8; ++c) ref[c] += logits[j] / z * v[j][c];
        for (int c = 0; c < 8; ++c) CHECK(std::abs(out[i][c] - ref[c]) < 1e-14);
    }

    Tensor tq(n, 8), tk(n, 8), tv(n, 8);
    for (int i = 0; i < n; ++i) {
        std::copy(q[i].begin(), q[i].end(), tq.row(i));
        std::copy(k[i].begin(), k[i].end(), tk.row(i));
        std::copy(v[i].begin(), v[i].end(), tv.row(i));
    }
    Tape t(false);
    const Var f = t.constant(identity_frames(n));
    const Tensor framed = frame_attention(t.constant(tq), t.constant(tk), t.constant(tv), &f, n, 1, spec,
                                          AttentionMetric::Euclidean)
                              .value();
    const Tensor plain = frame_attention(t.constant(tq), t.constant(tk), t.constant(tv), nullptr, n, 1, spec,
                                         AttentionMetric::Euclidean)
                             .value();
    CHECK(framed.data == plain.data);
}

TEST_CASE("multi-head attention weights and invariance")
{
    Rng rng(5);
    const RepSpec spec = RepSpec::parse("8x0+2x1");
    const int n = 6, heads = 2, events = 2;
    Tensor q(events * n, 32), k(events * n, 32), v(events * n, 32);
    for (Tensor* x : {&q, &k, &v})
        for (double& e : x->data) e = testing::normal(rng);
    std::vector<LocalFrame> frames = random_frames(rng, events * n);
    Tape t(false);
    const Var fv = t.constant(to_tensor(frames));
    Tensor weights;
    const Tensor out =
        frame_attention(t.constant(q), t.constant(k), t.constant(v), &fv, n, heads, spec, AttentionMetric::Minkowski,
                        &weights)
            .value();
    REQUIRE(weights.rows == events * heads * n);
    for (int r = 0; r < weights.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += weights(r, c);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }

    // Each head matches the single-head oracle.
    for (int e = 0; e < events; ++e)
        for (int h = 0; h < heads; ++h) {
            auto slice = [&](const Tensor& x) {
                std::vector<std::vector<double>> rows;
                for (int i = 0; i < n; ++i) rows.emplace_back(x.row(e * n + i) + 16 * h, x.row(e * n + i) + 16 * h + 16);
                return rows;
            };
            const std::vector<LocalFrame> ef(frames.begin() + e * n, frames.begin() + (e + 1) * n);
            const auto ref = testing::direct_attention(slice(q), slice(k), slice(v), ef, spec, true);
            CHECK(max_row_diff(slice(out), ref) < 1e-10);
        }

    // Local inputs are unchanged when frames become L lambda^-1, so the local output is too.
    const LorentzMatrix li = lorentz_inverse(random_lorentz_max_speed(rng, 0.9));
    for (auto& f : frames) f.L = f.L * li;
    const Var fv2 = t.constant(to_tensor(frames));
    Tensor weights2;
    const Tensor out2 =
        frame_attention(t.constant(q), t.constant(k), t.constant(v), &fv2, n, heads, spec, AttentionMetric::Minkowski,
                        &weights2)
            .value();
    CHECK(testing::rel_diff(weights2, weights) < 1e-8);
    CHECK(testing::rel_diff(out2, out) < 1e-8);
}

TEST_CASE("tensorial message layer")
{
    Rng rng(6);
    ad::ParameterSet ps;
    const int n = 5, dim = 10;
    const TensorialMessageLayer layer(ps, "mp", dim, RepSpec::parse("2x0+1x1+1x2"), 16, 7, rng);
    Tensor x(2 * n, dim);
    for (double& v : x.data) v = testing::normal(rng);
    auto frames = random_frames(rng, 2 * n);
    Tape t(false);
    const Var fv = t.constant(to_tensor(frames));
    const Tensor out = layer(t, t.constant(x), &fv, n).value();
    REQUIRE(out.cols == 7);

    const LorentzMatrix li = lorentz_inverse(random_lorentz_max_speed(rng, 0.9));
    std::vector<LocalFrame> moved = frames;
    for (auto& f : moved) f.L = f.L * li;
    const Var mv = t.constant(to_tensor(moved));
    CHECK(testing::rel_diff(layer(t, t.constant(x), &mv, n).value(), out) < 1e-8);

    // Permuting the particles of each event permutes the outputs.
    const std::vector<int> perm{3, 0, 4, 1, 2};
    Tensor xp(2 * n, dim);
    std::vector<LocalFrame> fp(2 * n);
    for (int e = 0; e < 2; ++e)
        for (int i = 0; i < n; ++i) {
            std::copy(x.row(e * n + perm[i]), x.row(e * n + perm[i]) + dim, xp.row(e * n + i));
            fp[e * n + i] = frames[e * n + perm[i]];
        }
    const Var fpv = t.constant(to_tensor(fp));
    const Tensor outp = layer(t, t.constant(xp), &fpv, n).value();
    for (int e = 0; e < 2; ++e)
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 7; ++c) CHECK(std::abs(outp(e * n + i, c) - out(e * n + perm[i], c)) < 1e-12);

    ad::ParameterSet ps2;
    const TensorialMessageLayer scalar(ps2, "s", dim, RepSpec::scalars(6), 16, 7, rng);
    const Var id = t.constant(identity_frames(2 * n));
    CHECK(scalar(t, t.constant(x), &id, n).value().data == scalar(t, t.constant(x), nullptr, n).value().data);
    CHECK_THROWS_AS(layer(t, t.constant(x), &fv, 3), DimensionError);
}

TEST_CASE("end-to-end invariance of the scalar readout")
{
    Rng rng(7);
    for (const char* policy : {"learned-pd", "learned-gs4", "global"}) {
        for (const char* metric : {"minkowski", "euclidean"}) {
            CAPTURE(policy);
            CAPTURE(metric);
            ModelConfig cfg = small_config();
            cfg.metric = parse_attention_metric(metric);
            const LlocaTransformer model(cfg, FramePolicy::parse(policy), {16, 2, {}}, 6, rng);
            const Batch b = testing::random_batch(rng, 4);
            const Tensor y = model.predict(b);
            double worst = 0.0;
            for (int trial = 0; trial < 20; ++trial) {
                const Tensor z = model.predict(b.transformed(random_lorentz_max_speed(rng, 0.9)));
                for (int e = 0; e < b.events; ++e)
                    worst = std::max(worst, std::abs(z(e, 0) - y(e, 0)) / (std::abs(y(e, 0)) + 1e-12));
            }
            CHECK(worst < 1e-6);
        }
    }
}

TEST_CASE("identity policy is not invariant")
{
    Rng rng(8);
    const LlocaTransformer model(small_config(), FramePolicy::parse("identity"), {}, 6, rng);
    const Batch b = testing::random_batch(rng, 4);
    const Tensor y = model.predict(b);
    const Tensor z = model.predict(b.transformed(random_lorentz_max_speed(rng, 0.9)));
    CHECK(testing::rel_diff(z, y) > 1e-4);
}

TEST_CASE("equivariant vector readout")
{
    Rng rng(9);
    ModelConfig cfg = small_config();
    cfg.readout = Readout::EquivariantVector;
    const LlocaTransformer model(cfg, FramePolicy::parse("learned-pd"), {16, 2, {}}, 6, rng);
    const Batch b = testing::random_batch(rng, 3);
    const Tensor y = model.predict(b);
    REQUIRE(y.cols == 4);
    for (int trial = 0; trial < 20; ++trial) {
        const LorentzMatrix l = random_lorentz_max_speed(rng, 0.9);
        CHECK(testing::rel_diff(model.predict(b.transformed(l)), testing::transform_rows(y, l)) < 1e-8);
    }
}

TEST_CASE("scalar readout is permutation invariant")
{
    Rng rng(10);
    const LlocaTransformer model(small_config(), FramePolicy::parse("learned-pd"), {16, 2, {}}, 6, rng);
    const Batch b = testing::random_batch(rng, 3);
    const std::vector<int> perm{5, 2, 0, 4, 1, 3};
    CHECK(testing::rel_diff(model.predict(b.permuted(perm)), model.predict(b)) < 1e-12);
}

TEST_CASE("special-case collapse")
{
    Rng rng(11);
    const LlocaTransformer model(small_config(), FramePolicy::parse("identity"), {}, 6, rng);
    const Batch b = testing::random_batch(rng, 5);
    Tape t(false);
    const Tensor plain = model.forward_with_frames(t, b, nullptr).value();
    CHECK(model.predict(b).data == plain.data);
    Rng draw(1);
    Tape t2(false);
    CHECK(model.forward(t2, b, &draw, true).value().data == plain.data);

    Rng same(11);
    FramePolicy aug = FramePolicy::parse("augment");
    aug.augment_sigma = 0.0;
    aug.augment_rotate = false;
    const LlocaTransformer augmented(small_config(), aug, {}, 6, same);
    Tape t3(false);
    CHECK(augmented.forward(t3, b, &draw, true).value().data == plain.data);
    CHECK(augmented.params().count() == model.params().count());
}

TEST_CASE("fixed policy freezes the frames net")
{
    Rng rng(12);
    const LlocaTransformer model(small_config(), FramePolicy::parse("fixed"), {16, 2, {}}, 6, rng);
    REQUIRE(model.frames_net() != nullptr);
    int frozen = 0;
    for (const auto& p : model.params()) {
        const bool in_net = p.name.rfind("frames.", 0) == 0;
        CHECK(p.trainable == !in_net);
        frozen += in_net ? 1 : 0;
    }
    CHECK(frozen > 0);
}

TEST_CASE("end-to-end gradients reach the frames net")
{
    Rng rng(13);
    LlocaTransformer model(small_config(), FramePolicy::parse("learned-pd"), {16, 2, {}}, 6, rng);
    const Batch b = testing::random_batch(rng, 3);
    Tensor y(3, 1);
    for (double& v : y.data) v = testing::normal(rng);
    auto loss = [&](Tape& t) { return ad::mse(model.forward(t, b), t.constant(y)); };

    auto& ps = model.params();
    std::vector<std::pair<std::size_t, std::size_t>> all = testing::all_entries(ps), picks;
    std::shuffle(all.begin(), all.end(), rng);
    int net = 0, rest = 0;
    for (const auto& e : all) {
        const bool in_net = ps[e.first].name.rfind("frames.", 0) == 0;
        if (in_net ? net++ < 8 : rest++ < 12) picks.push_back(e);
    }
    REQUIRE(picks.size() == 20);
    CHECK(testing::gradient_error(ps, loss, picks) < 1e-6);

    double phi_norm = 0.0;
    for (const auto& p : ps)
        if (p.name.rfind("frames.", 0) == 0)
            for (double g : p.grad.data) phi_norm += g * g;
    CHECK(phi_norm > 0.0);
}
