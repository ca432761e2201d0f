// lloca: data generation, training, evaluation and verification.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lloca/config.hpp"
#include "lloca/errors.hpp"
#include "lloca/frame_ops.hpp"
#include "lloca/ops.hpp"
#include "lloca/optim.hpp"
#include "lloca/toy_task.hpp"
#include "lloca/verify.hpp"

using namespace lloca;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kUsageError = 2;
constexpr int kCheckFailed = 1;

json to_json(const std::vector<CheckEntry>& entries)
{
    json arr = json::array();
    for (const auto& e : entries)
        arr.push_back({{"stage", e.stage}, {"metric", e.metric}, {"value", e.value}, {"tolerance", e.tolerance}, {"pass", e.pass}});
    return arr;
}

int report(const std::vector<CheckEntry>& entries)
{
    std::cout << to_json(entries).dump(2) << "\n";
    return all_pass(entries) ? 0 : kCheckFailed;
}

std::uint64_t env_seed(std::uint64_t fallback)
{
    if (const char* s = std::getenv("LLOCA_SEED"); s && *s) return std::stoull(s);
    return fallback;
}

struct Loaded {
    RunConfig cfg;
    std::unique_ptr<LlocaTransformer> model;
};

/// Model from a checkpoint and the model.cfg written next to it.
Loaded load_model(const fs::path& checkpoint)
{
    Loaded l;
    l.cfg = load_run_config(checkpoint.parent_path() / "model.cfg", false);
    Rng rng(l.cfg.seed);
    l.model = std::make_unique<LlocaTransformer>(l.cfg.model, l.cfg.policy, l.cfg.frames, l.cfg.task.n_particles, rng);
    load_checkpoint(l.model->params(), checkpoint);
    return l;
}

int cmd_gen_data(const fs::path& out, long events, int particles, std::uint64_t seed)
{
    TaskConfig task;
    task.n_particles = particles;
    write_dataset(generate_dataset(env_seed(seed), events, task), out);
    std::cout << json{{"events", events}, {"particles", particles}, {"path", out.string()}}.dump() << "\n";
    return 0;
}

int cmd_train(const fs::path& config, const fs::path& data, const fs::path& out)
{
    RunConfig cfg = load_run_config(config);
    const Dataset d = read_dataset(data);
    if (d.n_particles != cfg.task.n_particles) throw ConfigError("dataset multiplicity differs from task.particles");
    const Split split = split_indices(static_cast<long>(d.events.size()), cfg.n_train, cfg.n_val, cfg.n_test, cfg.split_seed);
    std::vector<double> targets;
    for (int i : split.train) targets.push_back(d.events[i].target);
    cfg.stats = Standardization::fit(targets);
    cfg.momentum_scale = momentum_scale(d, split.train);
    const Prepared train = prepare(d, split.train, *cfg.stats, *cfg.momentum_scale);
    const Prepared val = prepare(d, split.val, *cfg.stats, *cfg.momentum_scale);
    const Prepared test = prepare(d, split.test, *cfg.stats, *cfg.momentum_scale);

    Rng rng(cfg.seed);
    LlocaTransformer model(cfg.model, cfg.policy, cfg.frames, d.n_scalars, rng);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult result = train_loop(model, train, val, cfg.train, [](const MetricRow& r) {
        std::cerr << "iter " << r.iteration << " train " << r.train_mse << " val " << r.val_mse << " lr " << r.lr << "\n";
    });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out);
    save_checkpoint(model.params(), out / "checkpoint.bin");
    std::ofstream(out / "model.cfg") << to_text(cfg);
    write_metrics_csv(result.history, out / "metrics.csv");
    const double test_mse = test.size() ? evaluate_mse(model, test, cfg.train.eval_batch_size) : 0.0;
    std::cout << json{{"best_val_mse", result.best_val_mse},
                      {"best_iteration", result.best_iteration},
                      {"test_mse", test_mse},
                      {"parameters", model.params().count()},
                      {"seconds", seconds},
                      {"out", out.string()}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, const fs::path& residuals, const std::string& subset)
{
    const Loaded l = load_model(checkpoint);
    if (!l.cfg.stats || !l.cfg.momentum_scale) throw ConfigError("model.cfg lacks normalisation entries");
    const Dataset d = read_dataset(data);
    std::vector<int> idx;
    if (subset == "test") {
        idx = split_indices(static_cast<long>(d.events.size()), l.cfg.n_train, l.cfg.n_val, l.cfg.n_test, l.cfg.split_seed).test;
    } else {
        idx.resize(d.events.size());
        std::iota(idx.begin(), idx.end(), 0);
    }
    const Prepared p = prepare(d, idx, *l.cfg.stats, *l.cfg.momentum_scale);
    std::vector<double> preds;
    const double mse = evaluate_mse(*l.model, p, l.cfg.train.eval_batch_size, &preds);
    std::ofstream csv(residuals);
    if (!csv) throw FormatError("cannot write " + residuals.string());
    csv << "event,target,prediction,standardized_residual\n" << std::setprecision(17);
    for (std::size_t k = 0; k < idx.size(); ++k)
        csv << idx[k] << "," << d.events[idx[k]].target << "," << l.cfg.stats->inverse(preds[k]) << ","
            << preds[k] - p.targets[k] << "\n";
    std::cout << json{{"events", idx.size()}, {"test_mse", mse}, {"residuals", residuals.string()}}.dump(2) << "\n";
    return 0;
}

int cmd_check_equivariance(const fs::path& checkpoint, bool random_init, const std::string& policy, int trials,
                           double beta_max, std::uint64_t seed)
{
    Rng rng(env_seed(seed));
    std::unique_ptr<LlocaTransformer> model;
    int particles = 6;
    if (random_init) {
        ModelConfig cfg;
        cfg.hidden_dim = 32;
        cfg.num_heads = 2;
        cfg.num_blocks = 2;
        model = std::make_unique<LlocaTransformer>(cfg, FramePolicy::parse(policy), FramesNetConfig{32, 2, {}}, 6, rng);
    } else {
        Loaded l = load_model(checkpoint);
        particles = l.cfg.task.n_particles;
        model = std::move(l.model);
    }
    TaskConfig task;
    task.n_particles = particles;
    std::vector<ParticleSet> sets;
    for (int e = 0; e < 8; ++e) sets.push_back(generate_event(rng, task).particles);
    return report(check_equivariance(*model, Batch::from_sets(sets), trials, beta_max, rng));
}

int cmd_bench(const fs::path& config, int repeats)
{
    const RunConfig cfg = load_run_config(config);
    Rng rng(cfg.seed);
    LlocaTransformer model(cfg.model, cfg.policy, cfg.frames, cfg.task.n_particles, rng);
    std::vector<ParticleSet> sets;
    for (int e = 0; e < cfg.train.batch_size; ++e) sets.push_back(generate_event(rng, cfg.task).particles);
    const Batch b = Batch::from_sets(sets);
    ad::Tensor y(b.events, 1);

    auto time_ms = [&](const std::function<void()>& f) {
        f();
        const auto t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < repeats; ++r) f();
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / repeats;
    };
    const double frames_ms = time_ms([&] {
        ad::Tape t(false);
        model.frames(t, b, &rng, true);
    });
    const double forward_ms = time_ms([&] {
        ad::Tape t(false);
        model.forward(t, b, &rng, true);
    });
    const double step_ms = time_ms([&] {
        model.params().zero_grad();
        ad::Tape t;
        t.backward(ad::mse(model.forward(t, b, &rng, true), t.constant(y)));
    });
    std::cout << json{{"batch_size", b.events},
                      {"particles", b.particles},
                      {"parameters", model.params().count()},
                      {"frames_ms", frames_ms},
                      {"forward_ms", forward_ms},
                      {"forward_backward_ms", step_ms}}
                     .dump(2)
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Lorentz local canonicalization: toy-task data, training and verification"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Generate a toy-task dataset");
    fs::path gen_out;
    long gen_events = 0;
    int gen_particles = 6;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Output file")->required();
    gen->add_option("--events", gen_events, "Number of events")->required()->check(CLI::NonNegativeNumber);
    gen->add_option("--particles", gen_particles, "Particles per event")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Generator seed")->required();

    auto* train = app.add_subcommand("train", "Train a model");
    fs::path train_cfg, train_data, train_out;
    train->add_option("--config", train_cfg, "key=value run config")->required()->check(CLI::ExistingFile);
    train->add_option("--data", train_data, "Dataset file")->required()->check(CLI::ExistingFile);
    train->add_option("--out", train_out, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    fs::path eval_ckpt, eval_data, eval_res = "residuals.csv";
    std::string eval_subset = "all";
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint.bin (model.cfg alongside)")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "Dataset file")->required()->check(CLI::ExistingFile);
    eval->add_option("--residuals", eval_res, "Per-event residual CSV");
    eval->add_option("--subset", eval_subset, "all events or the configured test split")->check(CLI::IsMember({"all", "test"}));

    auto* equi = app.add_subcommand("check-equivariance", "Report Lorentz-equivariance violations per stage");
    fs::path equi_ckpt;
    bool equi_random = false;
    std::string equi_policy = "learned-pd";
    int equi_trials = 100;
    double equi_beta = 0.9;
    std::uint64_t equi_seed = 1;
    auto* ck = equi->add_option("--checkpoint", equi_ckpt, "Trained checkpoint")->check(CLI::ExistingFile);
    auto* ri = equi->add_flag("--random-init", equi_random, "Use a randomly initialised model");
    ck->excludes(ri);
    equi->add_option("--policy", equi_policy, "Frame policy for --random-init");
    equi->add_option("--trials", equi_trials, "Random transformations")->check(CLI::PositiveNumber);
    equi->add_option("--beta-max", equi_beta, "Maximal boost speed")->check(CLI::Range(0.0, 0.999));
    equi->add_option("--seed", equi_seed, "Seed");

    auto* grad = app.add_subcommand("check-gradients", "Compare gradients with central differences");
    int grad_trials = 3;
    std::uint64_t grad_seed = 1;
    grad->add_option("--trials", grad_trials, "Random instances per check")->check(CLI::PositiveNumber);
    grad->add_option("--seed", grad_seed, "Seed");

    auto* bench = app.add_subcommand("bench", "Time frames, forward and backward passes");
    fs::path bench_cfg;
    int bench_repeats = 5;
    bench->add_option("--config", bench_cfg, "key=value run config")->required()->check(CLI::ExistingFile);
    bench->add_option("--repeats", bench_repeats, "Timed repetitions")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }
    if (equi->parsed() && !equi_random && equi_ckpt.empty()) {
        std::cerr << "check-equivariance needs --checkpoint or --random-init\n";
        return kUsageError;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_events, gen_particles, gen_seed);
        if (train->parsed()) return cmd_train(train_cfg, train_data, train_out);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_res, eval_subset);
        if (equi->parsed()) return cmd_check_equivariance(equi_ckpt, equi_random, equi_policy, equi_trials, equi_beta, equi_seed);
        if (grad->parsed()) {
            Rng rng(env_seed(grad_seed));
            return report(check_gradients(grad_trials, rng));
        }
        if (bench->parsed()) return cmd_bench(bench_cfg, bench_repeats);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCheckFailed;
    }
    return 0;
}
