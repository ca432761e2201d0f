#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lloca/frames.hpp"
#include "lloca/frames_net.hpp"
#include "lloca/nn.hpp"
#include "lloca/particles.hpp"
#include "lloca/tensor_rep.hpp"

namespace lloca {

enum class AttentionMetric { Minkowski, Euclidean };
enum class Readout { InvariantScalar, EquivariantVector };

AttentionMetric parse_attention_metric(std::string_view s); // minkowski | euclidean
Readout parse_readout(std::string_view s);                  // invariant-scalar | equivariant-vector
std::string to_string(AttentionMetric m);
std::string to_string(Readout r);

struct ModelConfig {
    int hidden_dim = 128;
    int num_heads = 8;
    int num_blocks = 8;
    int mlp_ratio = 4;
    RepSpec head_spec = RepSpec::parse("8x0+2x1");
    AttentionMetric metric = AttentionMetric::Minkowski;
    Readout readout = Readout::InvariantScalar;

    /// Throws ConfigError unless hidden_dim = num_heads * head_spec.dimension().
    void validate() const;
};

// ---- canonicalization on single features -----------------------------------

/// f_L = rho(L_i) f_i for every particle.
std::vector<TensorFeature> canonicalize(std::span<const TensorFeature> features, std::span<const LocalFrame> frames,
                                        const RepSpec& spec);
/// y_i = rho(L_i^-1) y_{L,i}.
std::vector<TensorFeature> decanonicalize(std::span<const TensorFeature> local, std::span<const LocalFrame> frames,
                                          const RepSpec& spec);
/// rho(L_i L_j^-1)
Eigen::MatrixXd frame_transport(const LocalFrame& li, const LocalFrame& lj, const RepSpec& spec);

// ---- attention ---------------------------------------------------------------

/// Multi-head tensorial attention on batched rows (groups of `group` particles).
/// Queries, keys and values are brought to the global frame, attended there and
/// moved back into the receiver frame. frames == nullptr skips all frame
/// transformations (plain attention with the same metric signs). `weights`
/// optionally receives the attention weights.
ad::Var frame_attention(ad::Var q, ad::Var k, ad::Var v, const ad::Var* frames, int group, int heads,
                        const RepSpec& spec, AttentionMetric metric, ad::Tensor* weights = nullptr);

/// Single-head attention of one particle set, rows of length spec.dimension().
std::vector<std::vector<double>> mink_attention(const std::vector<std::vector<double>>& q,
                                                const std::vector<std::vector<double>>& k,
                                                const std::vector<std::vector<double>>& v,
                                                std::span<const LocalFrame> frames, const RepSpec& spec,
                                                AttentionMetric metric);

// ---- generic tensorial message passing --------------------------------------

/// f_i' = psi(f_i, sum_j phi(rho(L_i L_j^-1) W f_j)) with fully connected edges.
class TensorialMessageLayer {
public:
    TensorialMessageLayer(ad::ParameterSet& params, const std::string& name, int feature_dim, RepSpec message_spec,
                          int hidden, int out_dim, Rng& rng);

    /// features (rows, feature_dim) in local frames; frames == nullptr is the plain path.
    ad::Var operator()(ad::Tape& t, ad::Var features, const ad::Var* frames, int group) const;

    const RepSpec& message_spec() const { return spec_; }

private:
    RepSpec spec_;
    nn::Linear message_;
    nn::Mlp phi_;
    nn::Mlp psi_;
};

// ---- transformer ----------------------------------------------------------

/// Intermediate values captured during a forward pass.
struct ForwardTrace {
    ad::Tensor frames;          // (rows,16), empty on the plain path
    ad::Tensor local_inputs;    // (rows, 4 + n_scalars)
    ad::Tensor first_attention; // attention weights of block 0
};

class LlocaTransformer {
public:
    LlocaTransformer(ModelConfig cfg, FramePolicy policy, FramesNetConfig frames_cfg, int n_scalars, Rng& rng);

    LlocaTransformer(const LlocaTransformer&) = delete;
    LlocaTransformer& operator=(const LlocaTransformer&) = delete;

    ad::ParameterSet& params() { return params_; }
    const ad::ParameterSet& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    const FramePolicy& policy() const { return policy_; }
    const FramesNet* frames_net() const { return frames_net_.get(); }
    int n_scalars() const { return n_scalars_; }

    /// Frames of every particle under the configured policy, (rows,16).
    ad::Var frames(ad::Tape& t, const Batch& b, Rng* rng = nullptr, bool training = false) const;

    /// Frames, canonicalization, backbone and readout. Output is (events,1) for
    /// the invariant readout and (rows,4) for the vector readout.
    ad::Var forward(ad::Tape& t, const Batch& b, Rng* rng = nullptr, bool training = false,
                    ForwardTrace* trace = nullptr) const;

    /// Backbone and readout in the given frames. frames == nullptr runs the
    /// plain backbone on global inputs with no canonicalization code path.
    ad::Var forward_with_frames(ad::Tape& t, const Batch& b, const ad::Var* frames, ForwardTrace* trace = nullptr) const;

    /// Gradient-free forward of the full pipeline.
    ad::Tensor predict(const Batch& b) const;

private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::Linear qkv, out;
        nn::Mlp mlp;
    };

    ModelConfig cfg_;
    FramePolicy policy_;
    int n_scalars_;
    ad::ParameterSet params_;
    std::unique_ptr<FramesNet> frames_net_;
    nn::Linear embed_;
    std::vector<Block> blocks_;
    nn::LayerNorm final_ln_;
    nn::Mlp head_;
};

} // namespace lloca
