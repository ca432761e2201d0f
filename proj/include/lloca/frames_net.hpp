#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lloca/frame_ops.hpp"
#include "lloca/nn.hpp"
#include "lloca/particles.hpp"

namespace lloca {

enum class PolicyKind { Learned, Identity, Augment, GlobalCanonical, Fixed };

/// How each particle obtains its local frame.
struct FramePolicy {
    PolicyKind kind = PolicyKind::Learned;
    FrameConstructor constructor = FrameConstructor::PD;
    bool modified = true; // normalised vector prediction
    // Augment: random rotation (if enabled) times a truncated-normal boost.
    double augment_sigma = 0.1;
    double augment_clip = 3.0;
    bool augment_rotate = true;

    /// learned-pd | learned-gs4 | learned-so3 | identity | augment | global | fixed
    static FramePolicy parse(std::string_view name);
    std::string name() const;
    bool uses_frames_net() const
    {
        return kind == PolicyKind::Learned || kind == PolicyKind::GlobalCanonical || kind == PolicyKind::Fixed;
    }
};

struct FramesNetConfig {
    int hidden = 128;
    int layers = 2;
    std::vector<FourVector> references; // senders appended for frame prediction only
};

/// Equivariant prediction of three vectors per particle,
///   v_{i,k} = sum_j softmax_j(phi_k(s_i, s_j, <p_i,p_j>)) (p_i + p_j),
/// and frame construction from them.
class FramesNet {
public:
    FramesNet(ad::ParameterSet& params, int n_scalars, FramesNetConfig cfg, Rng& rng);

    /// (rows, 12): v_{i,0} | v_{i,1} | v_{i,2}. The modified form divides each
    /// p_i + p_j by its norm and rescales v_{i,k} by sqrt(sum_i <v_{i,k}, v_{i,k}>).
    ad::Var predict_vectors(ad::Tape& t, const Batch& b, bool modified) const;

    /// (events, 12) vectors for a virtual set token (mean scalars, summed momentum).
    ad::Var predict_set_vectors(ad::Tape& t, const Batch& b, bool modified) const;

    /// Softmax weights (rows*senders, 3) of the last prediction inputs, for inspection.
    ad::Tensor sender_weights(const Batch& b) const;

    /// (rows, 16) frames under `policy`. Augment draws one transformation per
    /// event from `rng` when training, and uses identity frames otherwise.
    ad::Var predict_frames(ad::Tape& t, const Batch& b, const FramePolicy& policy, Rng* rng, bool training) const;

    const nn::Mlp& phi() const { return phi_; }
    void set_trainable(bool on) const { phi_.set_trainable(on); }
    int n_scalars() const { return n_scalars_; }
    const FramesNetConfig& config() const { return cfg_; }

private:
    struct Pairs;
    ad::Var weighted(ad::Tape& t, const Pairs& p, bool modified) const;
    Pairs particle_pairs(const Batch& b) const;
    Pairs set_pairs(const Batch& b) const;

    FramesNetConfig cfg_;
    int n_scalars_;
    nn::Mlp phi_;
};

/// Frames for the policies that need no network (identity, augment).
ad::Var network_free_frames(ad::Tape& t, const Batch& b, const FramePolicy& policy, Rng* rng, bool training);

} // namespace lloca
