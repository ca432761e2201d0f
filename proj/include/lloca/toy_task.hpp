#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "lloca/model.hpp"
#include "lloca/optim.hpp"
#include "lloca/particles.hpp"

namespace lloca {

struct TaskConfig {
    int n_particles = 6;
    std::vector<double> masses;  // empty: default_masses(n_particles)
    double momentum_scale = 1.0; // std of each spatial component
    double m2 = 1.0;             // M^2 in s / (s + M^2)
};

/// 1.0 for the two leading ("incoming") particles, 0.5 for the rest.
std::vector<double> default_masses(int n_particles);

struct Event {
    ParticleSet particles;
    double target = 0.0;
};

/// Spatial momenta i.i.d. normal, on-shell energies, one-hot particle index as scalars.
Event generate_event(Rng& rng, const TaskConfig& cfg);

/// sum_{i<j} r_ij + r_01 r_02 r_12 with r_ij = s_ij / (s_ij + M^2), s_ij = <p_i+p_j, p_i+p_j>.
/// The product is dropped for fewer than three particles.
double target_fn(const ParticleSet& ps, double m2 = 1.0);

/// Log-target standardization.
struct Standardization {
    double mean = 0.0;
    double std = 1.0;

    static Standardization fit(std::span<const double> targets);
    double forward(double y) const;  // DomainError for y <= 0
    double inverse(double z) const;
};

struct Dataset {
    int n_particles = 0;
    int n_scalars = 0;
    std::vector<Event> events;
};

Dataset generate_dataset(std::uint64_t seed, long n_events, const TaskConfig& cfg);

/// Magic "LLCA", u32 version, u64 events, u16 particles, u16 scalars, then
/// float64 momenta (N x 4), scalars (N x S) and target per event.
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

struct Split {
    std::vector<int> train, val, test;
};

/// Disjoint index sets drawn by a seeded shuffle. Throws ConfigError if the
/// requested sizes exceed the dataset.
Split split_indices(long n_events, long n_train, long n_val, long n_test, std::uint64_t seed);

/// Standard deviation of all momentum components over `indices`.
double momentum_scale(const Dataset& d, std::span<const int> indices);

/// Model-ready events: momenta divided by a global scale, standardized targets.
struct Prepared {
    std::vector<ParticleSet> sets;
    std::vector<double> targets;
    std::size_t size() const { return sets.size(); }
};

Prepared prepare(const Dataset& d, std::span<const int> indices, const Standardization& stats, double scale);

struct TrainConfig {
    long iterations = 20000;
    int batch_size = 256;
    AdamConfig adam{};
    int validate_every = 500;
    int patience = 20;        // validations without improvement before decay
    double decay = 0.3;
    int eval_batch_size = 1024;
    std::uint64_t seed = 1;
    bool restore_best = true;
};

struct MetricRow {
    long iteration = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<MetricRow> history;
    double best_val_mse = 0.0;
    long best_iteration = 0;
};

/// Adam on the standardized-target MSE with plateau learning-rate decay.
/// The best validation parameters are restored at the end when requested.
TrainResult train_loop(LlocaTransformer& model, const Prepared& train, const Prepared& val, const TrainConfig& cfg,
                       const std::function<void(const MetricRow&)>& on_validate = {});

/// MSE on standardized targets; fills per-event predictions when requested.
double evaluate_mse(const LlocaTransformer& model, const Prepared& data, int batch_size,
                    std::vector<double>* predictions = nullptr);

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);

} // namespace lloca
