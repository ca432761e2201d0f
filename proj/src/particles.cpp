#include "lloca/particles.hpp"

#include "lloca/errors.hpp"

namespace lloca {

Batch Batch::from_sets(std::span<const ParticleSet> sets)
{
    Batch b;
    b.events = static_cast<int>(sets.size());
    if (sets.empty()) return b;
    b.particles = sets.front().size();
    b.n_scalars = sets.front().n_scalars();
    b.momenta = ad::Tensor(b.rows(), 4);
    b.scalars = ad::Tensor(b.rows(), b.n_scalars);
    int r = 0;
    for (const ParticleSet& ps : sets) {
        if (ps.size() != b.particles || ps.n_scalars() != b.n_scalars || ps.scalars.size() != ps.momenta.size())
            throw ShapeError("Batch: events differ in multiplicity or scalar width");
        for (int i = 0; i < ps.size(); ++i, ++r) {
            for (int mu = 0; mu < 4; ++mu) b.momenta(r, mu) = ps.momenta[i][mu];
            if (static_cast<int>(ps.scalars[i].size()) != b.n_scalars) throw ShapeError("Batch: ragged scalar rows");
            for (int s = 0; s < b.n_scalars; ++s) b.scalars(r, s) = ps.scalars[i][s];
        }
    }
    return b;
}

ParticleSet Batch::event(int e) const
{
    ParticleSet ps;
    for (int i = 0; i < particles; ++i) {
        const int r = e * particles + i;
        ps.momenta.emplace_back(momenta(r, 0), momenta(r, 1), momenta(r, 2), momenta(r, 3));
        ps.scalars.emplace_back(scalars.row(r), scalars.row(r) + n_scalars);
    }
    return ps;
}

Batch Batch::transformed(const LorentzMatrix& lambda) const
{
    Batch out = *this;
    for (int r = 0; r < rows(); ++r) {
        const FourVector p = lambda * FourVector(momenta(r, 0), momenta(r, 1), momenta(r, 2), momenta(r, 3));
        for (int mu = 0; mu < 4; ++mu) out.momenta(r, mu) = p[mu];
    }
    return out;
}

Batch Batch::transformed(std::span<const LorentzMatrix> lambdas) const
{
    if (static_cast<int>(lambdas.size()) != events) throw ShapeError("Batch::transformed: one transformation per event");
    Batch out = *this;
    for (int r = 0; r < rows(); ++r) {
        const FourVector p =
            lambdas[r / particles] * FourVector(momenta(r, 0), momenta(r, 1), momenta(r, 2), momenta(r, 3));
        for (int mu = 0; mu < 4; ++mu) out.momenta(r, mu) = p[mu];
    }
    return out;
}

Batch Batch::permuted(std::span<const int> perm) const
{
    if (static_cast<int>(perm.size()) != particles) throw ShapeError("Batch::permuted: permutation size");
    Batch out = *this;
    for (int e = 0; e < events; ++e)
        for (int i = 0; i < particles; ++i) {
            const int dst = e * particles + i;
            const int src = e * particles + perm[i];
            std::copy(momenta.row(src), momenta.row(src) + 4, out.momenta.row(dst));
            std::copy(scalars.row(src), scalars.row(src) + n_scalars, out.scalars.row(dst));
        }
    return out;
}

std::vector<FourVector> default_reference_particles()
{
    return {{1.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, {1.0, 0.0, 0.0, -1.0}};
}

ParticleSet append_reference_particles(const ParticleSet& ps, std::span<const FourVector> refs)
{
    if (refs.empty()) return ps;
    ParticleSet out = ps;
    const int s = ps.n_scalars();
    for (auto& row : out.scalars) row.push_back(0.0);
    for (const FourVector& r : refs) {
        out.momenta.push_back(r);
        std::vector<double> row(static_cast<std::size_t>(s) + 1, 0.0);
        row.back() = 1.0;
        out.scalars.push_back(std::move(row));
    }
    return out;
}

} // namespace lloca
