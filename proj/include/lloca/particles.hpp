#pragma once

#include <span>
#include <vector>

#include "lloca/autodiff.hpp"
#include "lloca/minkowski.hpp"

namespace lloca {

/// N four-momenta with S scalar attributes each.
struct ParticleSet {
    std::vector<FourVector> momenta;
    std::vector<std::vector<double>> scalars; // N rows of S values

    int size() const { return static_cast<int>(momenta.size()); }
    int n_scalars() const { return scalars.empty() ? 0 : static_cast<int>(scalars.front().size()); }
};

/// Fixed-multiplicity batch of events, stored as (events*particles, .) rows.
struct Batch {
    int events = 0;
    int particles = 0;
    int n_scalars = 0;
    ad::Tensor momenta; // (events*particles, 4)
    ad::Tensor scalars; // (events*particles, n_scalars)

    int rows() const { return events * particles; }

    static Batch from_sets(std::span<const ParticleSet> sets);
    static Batch from_set(const ParticleSet& set) { return from_sets(std::span<const ParticleSet>(&set, 1)); }
    ParticleSet event(int e) const;

    /// Applies lambda to every momentum.
    Batch transformed(const LorentzMatrix& lambda) const;
    /// Applies lambdas[e] to the momenta of event e.
    Batch transformed(std::span<const LorentzMatrix> lambdas) const;
    /// Reorders the particles of every event: new particle i is old perm[i].
    Batch permuted(std::span<const int> perm) const;
};

/// Default symmetry-breaking references: time direction and both beam directions.
std::vector<FourVector> default_reference_particles();

/// Appends `refs` behind the particles and adds one trailing scalar column that
/// flags them (0 for original particles, 1 for references). Empty refs return the input.
ParticleSet append_reference_particles(const ParticleSet& ps, std::span<const FourVector> refs);

} // namespace lloca
