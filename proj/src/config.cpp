#include "lloca/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "lloca/errors.hpp"

namespace lloca {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v)
{
    T out{};
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("bad value '" + v + "' for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("bad boolean '" + v + "' for " + key);
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text)
{
    std::map<std::string, std::string> kv;
    int line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
    }
    return kv;
}

RunConfig run_config_from(const std::map<std::string, std::string>& kv, bool use_env)
{
    RunConfig c;
    bool have_seed = false;
    bool have_split_seed = false;
    std::optional<double> log_mean, log_std;

    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); have_seed = true; }},
        {"data.train", [&](auto& k, auto& v) { c.n_train = parse_number<long>(k, v); }},
        {"data.val", [&](auto& k, auto& v) { c.n_val = parse_number<long>(k, v); }},
        {"data.test", [&](auto& k, auto& v) { c.n_test = parse_number<long>(k, v); }},
        {"data.split_seed", [&](auto& k, auto& v) { c.split_seed = parse_number<std::uint64_t>(k, v); have_split_seed = true; }},
        {"task.particles", [&](auto& k, auto& v) { c.task.n_particles = parse_number<int>(k, v); }},
        {"task.m2", [&](auto& k, auto& v) { c.task.m2 = parse_number<double>(k, v); }},
        {"task.momentum_scale", [&](auto& k, auto& v) { c.task.momentum_scale = parse_number<double>(k, v); }},
        {"model.hidden_dim", [&](auto& k, auto& v) { c.model.hidden_dim = parse_number<int>(k, v); }},
        {"model.num_heads", [&](auto& k, auto& v) { c.model.num_heads = parse_number<int>(k, v); }},
        {"model.num_blocks", [&](auto& k, auto& v) { c.model.num_blocks = parse_number<int>(k, v); }},
        {"model.mlp_ratio", [&](auto& k, auto& v) { c.model.mlp_ratio = parse_number<int>(k, v); }},
        {"model.head_spec", [&](auto&, auto& v) { c.model.head_spec = RepSpec::parse(v); }},
        {"model.metric", [&](auto&, auto& v) { c.model.metric = parse_attention_metric(v); }},
        {"model.readout", [&](auto&, auto& v) { c.model.readout = parse_readout(v); }},
        {"frames.policy",
         [&](auto&, auto& v) {
             const FramePolicy parsed = FramePolicy::parse(v);
             c.policy.kind = parsed.kind;
             c.policy.constructor = parsed.constructor;
         }},
        {"frames.constructor", [&](auto&, auto& v) { c.policy.constructor = parse_frame_constructor(v); }},
        {"frames.modified", [&](auto& k, auto& v) { c.policy.modified = parse_bool(k, v); }},
        {"frames.hidden", [&](auto& k, auto& v) { c.frames.hidden = parse_number<int>(k, v); }},
        {"frames.layers", [&](auto& k, auto& v) { c.frames.layers = parse_number<int>(k, v); }},
        {"frames.references",
         [&](auto& k, auto& v) {
             c.frames.references = parse_bool(k, v) ? default_reference_particles() : std::vector<FourVector>{};
         }},
        {"frames.augment_sigma", [&](auto& k, auto& v) { c.policy.augment_sigma = parse_number<double>(k, v); }},
        {"frames.augment_clip", [&](auto& k, auto& v) { c.policy.augment_clip = parse_number<double>(k, v); }},
        {"frames.augment_rotate", [&](auto& k, auto& v) { c.policy.augment_rotate = parse_bool(k, v); }},
        {"train.iterations", [&](auto& k, auto& v) { c.train.iterations = parse_number<long>(k, v); }},
        {"train.batch_size", [&](auto& k, auto& v) { c.train.batch_size = parse_number<int>(k, v); }},
        {"train.lr", [&](auto& k, auto& v) { c.train.adam.lr = parse_number<double>(k, v); }},
        {"train.beta1", [&](auto& k, auto& v) { c.train.adam.beta1 = parse_number<double>(k, v); }},
        {"train.beta2", [&](auto& k, auto& v) { c.train.adam.beta2 = parse_number<double>(k, v); }},
        {"train.eps", [&](auto& k, auto& v) { c.train.adam.eps = parse_number<double>(k, v); }},
        {"train.validate_every", [&](auto& k, auto& v) { c.train.validate_every = parse_number<int>(k, v); }},
        {"train.patience", [&](auto& k, auto& v) { c.train.patience = parse_number<int>(k, v); }},
        {"train.decay", [&](auto& k, auto& v) { c.train.decay = parse_number<double>(k, v); }},
        {"train.eval_batch_size", [&](auto& k, auto& v) { c.train.eval_batch_size = parse_number<int>(k, v); }},
        {"train.restore_best", [&](auto& k, auto& v) { c.train.restore_best = parse_bool(k, v); }},
        {"norm.log_mean", [&](auto& k, auto& v) { log_mean = parse_number<double>(k, v); }},
        {"norm.log_std", [&](auto& k, auto& v) { log_std = parse_number<double>(k, v); }},
        {"norm.momentum_scale", [&](auto& k, auto& v) { c.momentum_scale = parse_number<double>(k, v); }},
    };

    for (const auto& [key, value] : kv) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
        try {
            it->second(key, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }
    if (use_env)
        if (const char* env = std::getenv("LLOCA_SEED"); env && *env) {
            c.seed = parse_number<std::uint64_t>("LLOCA_SEED", env);
            have_seed = true;
        }
    if (!have_seed) throw ConfigError("config needs a seed");
    if (!have_split_seed) c.split_seed = c.seed;
    if (log_mean.has_value() != log_std.has_value()) throw ConfigError("norm.log_mean and norm.log_std go together");
    if (log_mean) c.stats = Standardization{*log_mean, *log_std};
    c.train.seed = c.seed;
    c.model.validate();
    if (c.task.n_particles < 1) throw ConfigError("task.particles must be positive");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, bool use_env)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return run_config_from(parse_key_values(ss.str()), use_env);
}

std::string to_text(const RunConfig& c)
{
    std::ostringstream os;
    os << "seed = " << c.seed << "\n"
       << "data.train = " << c.n_train << "\n"
       << "data.val = " << c.n_val << "\n"
       << "data.test = " << c.n_test << "\n"
       << "data.split_seed = " << c.split_seed << "\n"
       << "task.particles = " << c.task.n_particles << "\n"
       << "task.m2 = " << fmt(c.task.m2) << "\n"
       << "task.momentum_scale = " << fmt(c.task.momentum_scale) << "\n"
       << "model.hidden_dim = " << c.model.hidden_dim << "\n"
       << "model.num_heads = " << c.model.num_heads << "\n"
       << "model.num_blocks = " << c.model.num_blocks << "\n"
       << "model.mlp_ratio = " << c.model.mlp_ratio << "\n"
       << "model.head_spec = " << c.model.head_spec.to_string() << "\n"
       << "model.metric = " << to_string(c.model.metric) << "\n"
       << "model.readout = " << to_string(c.model.readout) << "\n"
       << "frames.policy = " << c.policy.name() << "\n"
       << "frames.constructor = " << to_string(c.policy.constructor) << "\n"
       << "frames.modified = " << (c.policy.modified ? "true" : "false") << "\n"
       << "frames.hidden = " << c.frames.hidden << "\n"
       << "frames.layers = " << c.frames.layers << "\n"
       << "frames.references = " << (c.frames.references.empty() ? "false" : "true") << "\n"
       << "frames.augment_sigma = " << fmt(c.policy.augment_sigma) << "\n"
       << "frames.augment_clip = " << fmt(c.policy.augment_clip) << "\n"
       << "frames.augment_rotate = " << (c.policy.augment_rotate ? "true" : "false") << "\n"
       << "train.iterations = " << c.train.iterations << "\n"
       << "train.batch_size = " << c.train.batch_size << "\n"
       << "train.lr = " << fmt(c.train.adam.lr) << "\n"
       << "train.beta1 = " << fmt(c.train.adam.beta1) << "\n"
       << "train.beta2 = " << fmt(c.train.adam.beta2) << "\n"
       << "train.eps = " << fmt(c.train.adam.eps) << "\n"
       << "train.validate_every = " << c.train.validate_every << "\n"
       << "train.patience = " << c.train.patience << "\n"
       << "train.decay = " << fmt(c.train.decay) << "\n"
       << "train.eval_batch_size = " << c.train.eval_batch_size << "\n"
       << "train.restore_best = " << (c.train.restore_best ? "true" : "false") << "\n";
    if (c.stats) os << "norm.log_mean = " << fmt(c.stats->mean) << "\nnorm.log_std = " << fmt(c.stats->std) << "\n";
    if (c.momentum_scale) os << "norm.momentum_scale = " << fmt(*c.momentum_scale) << "\n";
    return os.str();
}

} // namespace lloca
