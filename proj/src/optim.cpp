#include "lloca/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lloca/errors.hpp"
#include "lloca/io_util.hpp"

namespace lloca {

void adam_step(ad::ParameterSet& params, AdamState& state, const AdamConfig& cfg)
{
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& p : params) {
            state.m.emplace_back(p.value.rows, p.value.cols);
            state.v.emplace_back(p.value.rows, p.value.cols);
        }
        state.step = 0;
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::Parameter& p = params[k];
        if (!p.trainable) continue;
        auto& m = state.m[k].data;
        auto& v = state.v[k].data;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            p.value.data[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
        }
    }
}

namespace {
constexpr char kMagic[4] = {'L', 'L', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;
} // namespace

void save_checkpoint(const ad::ParameterSet& params, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    io::write_le<std::uint32_t>(out, kVersion);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        io::write_le<std::uint32_t>(out, 2);
        io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows));
        io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols));
        for (double v : p.value.data) io::write_le<double>(out, v);
    }
    if (!out) throw FormatError("write failed for " + path.string());
}

void load_checkpoint(ad::ParameterSet& params, const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint file: " + path.string());
    if (io::read_le<std::uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
    const auto count = io::read_le<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = io::read_le<std::uint32_t>(in);
        if (len > (1u << 16)) throw FormatError("corrupt parameter name length");
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw FormatError("truncated checkpoint");
        const auto rank = io::read_le<std::uint32_t>(in);
        if (rank > 8) throw FormatError("corrupt parameter rank");
        std::vector<std::uint64_t> dims(rank);
        std::uint64_t total = 1;
        for (auto& d : dims) total *= (d = io::read_le<std::uint64_t>(in));
        ad::Parameter* p = params.find(name);
        if (!p) throw FormatError("checkpoint parameter '" + name + "' is not part of the model");
        if (total != p->value.size() || (rank == 2 && (dims[0] != static_cast<std::uint64_t>(p->value.rows))))
            throw FormatError("shape mismatch for parameter '" + name + "'");
        for (double& v : p->value.data) v = io::read_le<double>(in);
    }
    if (count != params.size()) throw FormatError("checkpoint parameter count does not match the model");
}

} // namespace lloca
