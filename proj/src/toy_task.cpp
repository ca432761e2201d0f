#include "lloca/toy_task.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "lloca/errors.hpp"
#include "lloca/io_util.hpp"

namespace lloca {

std::vector<double> default_masses(int n_particles)
{
    std::vector<double> m(static_cast<std::size_t>(std::max(n_particles, 0)), 0.5);
    for (int i = 0; i < std::min(n_particles, 2); ++i) m[i] = 1.0;
    return m;
}

Event generate_event(Rng& rng, const TaskConfig& cfg)
{
    const std::vector<double> masses = cfg.masses.empty() ? default_masses(cfg.n_particles) : cfg.masses;
    if (static_cast<int>(masses.size()) != cfg.n_particles) throw ConfigError("one mass per particle is required");
    std::normal_distribution<double> normal(0.0, cfg.momentum_scale);
    Event ev;
    for (int i = 0; i < cfg.n_particles; ++i) {
        if (!(masses[i] >= 0.0)) throw DomainError("particle masses must be non-negative");
        double px, py, pz, e;
        do {
            px = normal(rng);
            py = normal(rng);
            pz = normal(rng);
            e = std::sqrt(px * px + py * py + pz * pz + masses[i] * masses[i]);
        } while (!(e > 1e-6));
        ev.particles.momenta.emplace_back(e, px, py, pz);
        std::vector<double> s(static_cast<std::size_t>(cfg.n_particles), 0.0);
        s[i] = 1.0;
        ev.particles.scalars.push_back(std::move(s));
    }
    ev.target = target_fn(ev.particles, cfg.m2);
    return ev;
}

double target_fn(const ParticleSet& ps, double m2)
{
    const int n = ps.size();
    auto ratio = [&](int i, int j) {
        const FourVector pij = ps.momenta[i] + ps.momenta[j];
        const double s = mink_product(pij, pij);
        return s / (s + m2);
    };
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) sum += ratio(i, j);
    if (n >= 3) sum += ratio(0, 1) * ratio(0, 2) * ratio(1, 2);
    return sum;
}

Standardization Standardization::fit(std::span<const double> targets)
{
    if (targets.empty()) throw DomainError("standardization needs at least one target");
    double mean = 0.0;
    for (double y : targets) {
        if (!(y > 0.0)) throw DomainError("standardization needs positive targets");
        mean += std::log(y);
    }
    mean /= static_cast<double>(targets.size());
    double var = 0.0;
    for (double y : targets) var += (std::log(y) - mean) * (std::log(y) - mean);
    var /= static_cast<double>(targets.size());
    Standardization s;
    s.mean = mean;
    s.std = var > 0.0 ? std::sqrt(var) : 1.0;
    return s;
}

double Standardization::forward(double y) const
{
    if (!(y > 0.0)) throw DomainError("standardize: target must be positive");
    return (std::log(y) - mean) / std;
}

double Standardization::inverse(double z) const { return std::exp(z * std + mean); }

Dataset generate_dataset(std::uint64_t seed, long n_events, const TaskConfig& cfg)
{
    Rng rng(seed);
    Dataset d;
    d.n_particles = cfg.n_particles;
    d.n_scalars = cfg.n_particles;
    d.events.reserve(static_cast<std::size_t>(n_events));
    for (long e = 0; e < n_events; ++e) d.events.push_back(generate_event(rng, cfg));
    return d;
}

namespace {
constexpr char kMagic[4] = {'L', 'L', 'C', 'A'};
constexpr std::uint32_t kVersion = 1;
} // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write dataset " + path.string());
    out.write(kMagic, 4);
    io::write_le<std::uint32_t>(out, kVersion);
    io::write_le<std::uint64_t>(out, d.events.size());
    io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(d.n_particles));
    io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(d.n_scalars));
    for (const Event& ev : d.events) {
        if (ev.particles.size() != d.n_particles || ev.particles.n_scalars() != d.n_scalars)
            throw FormatError("event shape differs from dataset header");
        for (const FourVector& p : ev.particles.momenta)
            for (int mu = 0; mu < 4; ++mu) io::write_le<double>(out, p[mu]);
        for (const auto& row : ev.particles.scalars)
            for (double s : row) io::write_le<double>(out, s);
        io::write_le<double>(out, ev.target);
    }
    if (!out) throw FormatError("write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open dataset " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad dataset magic in " + path.string());
    if (io::read_le<std::uint32_t>(in) != kVersion) throw FormatError("unsupported dataset version");
    const auto n = io::read_le<std::uint64_t>(in);
    Dataset d;
    d.n_particles = io::read_le<std::uint16_t>(in);
    d.n_scalars = io::read_le<std::uint16_t>(in);
    const auto bytes_per_event = 8ull * (d.n_particles * 4ull + d.n_particles * static_cast<std::uint64_t>(d.n_scalars) + 1);
    const auto here = in.tellg();
    in.seekg(0, std::ios::end);
    const auto remaining = static_cast<std::uint64_t>(in.tellg() - here);
    in.seekg(here);
    if (remaining < n * bytes_per_event) throw FormatError("dataset is truncated");
    d.events.resize(n);
    for (Event& ev : d.events) {
        for (int i = 0; i < d.n_particles; ++i) {
            FourVector p;
            for (int mu = 0; mu < 4; ++mu) p[mu] = io::read_le<double>(in);
            ev.particles.momenta.push_back(p);
        }
        for (int i = 0; i < d.n_particles; ++i) {
            std::vector<double> row(static_cast<std::size_t>(d.n_scalars));
            for (double& s : row) s = io::read_le<double>(in);
            ev.particles.scalars.push_back(std::move(row));
        }
        ev.target = io::read_le<double>(in);
    }
    return d;
}

Split split_indices(long n_events, long n_train, long n_val, long n_test, std::uint64_t seed)
{
    if (n_train < 0 || n_val < 0 || n_test < 0 || n_train + n_val + n_test > n_events)
        throw ConfigError("split sizes exceed the dataset (" + std::to_string(n_events) + " events)");
    std::vector<int> idx(static_cast<std::size_t>(n_events));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    Split s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    s.test.assign(idx.begin() + n_train + n_val, idx.begin() + n_train + n_val + n_test);
    return s;
}

double momentum_scale(const Dataset& d, std::span<const int> indices)
{
    double sum = 0.0, sum2 = 0.0;
    long n = 0;
    for (int i : indices)
        for (const FourVector& p : d.events[i].particles.momenta)
            for (int mu = 0; mu < 4; ++mu) {
                sum += p[mu];
                sum2 += p[mu] * p[mu];
                ++n;
            }
    if (n == 0) return 1.0;
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    return var > 0.0 ? std::sqrt(var) : 1.0;
}

Prepared prepare(const Dataset& d, std::span<const int> indices, const Standardization& stats, double scale)
{
    Prepared p;
    p.sets.reserve(indices.size());
    p.targets.reserve(indices.size());
    for (int i : indices) {
        ParticleSet ps = d.events[i].particles;
        for (FourVector& m : ps.momenta) m = (1.0 / scale) * m;
        p.sets.push_back(std::move(ps));
        p.targets.push_back(stats.forward(d.events[i].target));
    }
    return p;
}

double evaluate_mse(const LlocaTransformer& model, const Prepared& data, int batch_size, std::vector<double>* predictions)
{
    if (data.size() == 0) return 0.0;
    if (predictions) predictions->assign(data.size(), 0.0);
    double se = 0.0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t n = std::min<std::size_t>(batch_size, data.size() - start);
        const Batch b = Batch::from_sets(std::span<const ParticleSet>(data.sets.data() + start, n));
        const ad::Tensor y = model.predict(b);
        for (std::size_t e = 0; e < n; ++e) {
            const double d = y.data[e] - data.targets[start + e];
            se += d * d;
            if (predictions) (*predictions)[start + e] = y.data[e];
        }
    }
    return se / static_cast<double>(data.size());
}

TrainResult train_loop(LlocaTransformer& model, const Prepared& train, const Prepared& val, const TrainConfig& cfg,
                       const std::function<void(const MetricRow&)>& on_validate)
{
    if (model.config().readout != Readout::InvariantScalar) throw ConfigError("training needs the invariant readout");
    if (cfg.batch_size <= 0 || cfg.validate_every <= 0) throw ConfigError("batch size and validation interval must be positive");
    TrainResult result;
    ad::ParameterSet& params = model.params();
    std::vector<ad::Tensor> best;
    for (const auto& p : params) best.push_back(p.value);
    result.best_val_mse = evaluate_mse(model, val, cfg.eval_batch_size);
    result.best_iteration = 0;
    if (cfg.iterations <= 0 || train.size() == 0) {
        result.history.push_back({0, 0.0, result.best_val_mse, cfg.adam.lr});
        return result;
    }

    Rng rng(cfg.seed);
    AdamConfig adam = cfg.adam;
    AdamState state;
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    double plateau_best = result.best_val_mse;
    int bad = 0;
    double running = 0.0;
    long running_n = 0;
    std::vector<ParticleSet> sets;
    ad::Tensor target(cfg.batch_size, 1);

    for (long it = 1; it <= cfg.iterations; ++it) {
        const int n = static_cast<int>(std::min<std::size_t>(cfg.batch_size, train.size()));
        sets.clear();
        target = ad::Tensor(n, 1);
        for (int k = 0; k < n; ++k) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const int idx = order[cursor++];
            sets.push_back(train.sets[idx]);
            target.data[k] = train.targets[idx];
        }
        const Batch b = Batch::from_sets(sets);
        params.zero_grad();
        ad::Tape tape;
        ad::Var loss = ad::mse(model.forward(tape, b, &rng, true), tape.constant(target));
        tape.backward(loss);
        adam_step(params, state, adam);
        running += loss.item();
        ++running_n;

        if (it % cfg.validate_every == 0 || it == cfg.iterations) {
            MetricRow row{it, running / running_n, evaluate_mse(model, val, cfg.eval_batch_size), adam.lr};
            running = 0.0;
            running_n = 0;
            if (row.val_mse < result.best_val_mse) {
                result.best_val_mse = row.val_mse;
                result.best_iteration = it;
                for (std::size_t k = 0; k < params.size(); ++k) best[k] = params[k].value;
            }
            if (row.val_mse < plateau_best * (1.0 - 1e-4)) {
                plateau_best = row.val_mse;
                bad = 0;
            } else if (++bad > cfg.patience) {
                adam.lr *= cfg.decay;
                bad = 0;
            }
            result.history.push_back(row);
            if (on_validate) on_validate(row);
        }
    }
    if (cfg.restore_best)
        for (std::size_t k = 0; k < params.size(); ++k) params[k].value = best[k];
    return result;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "iteration,train_mse,val_mse,lr\n";
    out.precision(10);
    for (const MetricRow& r : rows) out << r.iteration << ',' << r.train_mse << ',' << r.val_mse << ',' << r.lr << '\n';
}

} // namespace lloca
