#include "lloca/tensor_rep.hpp"

#include <charconv>
#include <sstream>

#include "lloca/errors.hpp"

namespace lloca {

namespace {

int pow4(int n)
{
    int d = 1;
    for (int i = 0; i < n; ++i) d *= 4;
    return d;
}

int parse_int(std::string_view s, std::string_view whole)
{
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw DimensionError("bad rep spec '" + std::string(whole) + "'");
    return v;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
}

// Contract axis `axis` of an order-n tensor block with lambda, in place via scratch.
void contract_axis(const Mat4& lambda, int order, int axis, std::span<const double> in, std::span<double> out)
{
    const int inner = pow4(order - 1 - axis);
    const int outer = pow4(axis);
    for (int o = 0; o < outer; ++o) {
        for (int i = 0; i < inner; ++i) {
            const int base = o * 4 * inner + i;
            double x[4];
            for (int k = 0; k < 4; ++k) x[k] = in[base + k * inner];
            for (int r = 0; r < 4; ++r) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += lambda(r, k) * x[k];
                out[base + r * inner] = acc;
            }
        }
    }
}

} // namespace

RepSpec::RepSpec(std::vector<RepBlock> blocks, int max_order) : blocks_(std::move(blocks)), max_order_(max_order)
{
    for (const auto& b : blocks_) {
        if (b.order < 0 || b.multiplicity <= 0)
            throw DimensionError("rep spec blocks need order >= 0 and multiplicity > 0");
        if (b.order > max_order_)
            throw DimensionError("tensor order " + std::to_string(b.order) + " exceeds max order " +
                                 std::to_string(max_order_));
        dim_ += b.multiplicity * pow4(b.order);
    }
}

RepSpec RepSpec::parse(std::string_view text, int max_order)
{
    std::vector<RepBlock> blocks;
    std::string_view rest = text;
    while (!rest.empty()) {
        const auto plus = rest.find('+');
        const std::string_view term = trim(rest.substr(0, plus));
        const auto x = term.find('x');
        if (x == std::string_view::npos) throw DimensionError("bad rep spec '" + std::string(text) + "'");
        blocks.push_back({parse_int(term.substr(x + 1), text), parse_int(term.substr(0, x), text)});
        if (plus == std::string_view::npos) break;
        rest = rest.substr(plus + 1);
        if (rest.empty()) throw DimensionError("bad rep spec '" + std::string(text) + "'");
    }
    if (blocks.empty()) throw DimensionError("empty rep spec");
    return RepSpec(std::move(blocks), max_order);
}

bool RepSpec::scalar_only() const
{
    for (const auto& b : blocks_)
        if (b.order != 0) return false;
    return true;
}

std::string RepSpec::to_string() const
{
    std::ostringstream os;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i) os << '+';
        os << blocks_[i].multiplicity << 'x' << blocks_[i].order;
    }
    return os.str();
}

TensorFeature::TensorFeature(std::vector<double> v, RepSpec s) : values(std::move(v)), spec(std::move(s))
{
    if (static_cast<int>(values.size()) != spec.dimension())
        throw DimensionError("feature length " + std::to_string(values.size()) + " != rep dimension " +
                             std::to_string(spec.dimension()));
}

Eigen::MatrixXd rep_matrix(const Mat4& lambda, const RepSpec& spec)
{
    const int n = spec.dimension();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    int offset = 0;
    for (const auto& b : spec.blocks()) {
        Eigen::MatrixXd block = Eigen::MatrixXd::Ones(1, 1);
        for (int k = 0; k < b.order; ++k) {
            // Kronecker product: row-major multi-index with the first axis most significant.
            Eigen::MatrixXd next(block.rows() * 4, block.cols() * 4);
            for (int i = 0; i < block.rows(); ++i)
                for (int j = 0; j < block.cols(); ++j)
                    next.block(i * 4, j * 4, 4, 4) = block(i, j) * lambda;
            block = std::move(next);
        }
        const int d = static_cast<int>(block.rows());
        for (int m = 0; m < b.multiplicity; ++m) {
            out.block(offset, offset, d, d) = block;
            offset += d;
        }
    }
    return out;
}

void apply_rep(const Mat4& lambda, const RepSpec& spec, std::span<const double> in, std::span<double> out)
{
    const auto n = static_cast<std::size_t>(spec.dimension());
    if (in.size() != n || out.size() != n) throw DimensionError("apply_rep: feature length does not match rep spec");
    std::size_t offset = 0;
    std::vector<double> scratch;
    for (const auto& b : spec.blocks()) {
        const int d = pow4(b.order);
        for (int m = 0; m < b.multiplicity; ++m) {
            auto src = in.subspan(offset, d);
            auto dst = out.subspan(offset, d);
            if (b.order == 0) {
                dst[0] = src[0];
            } else if (b.order == 1) {
                contract_axis(lambda, 1, 0, src, dst);
            } else {
                // Alternate between dst and scratch so the final axis lands in dst.
                scratch.assign(d, 0.0);
                std::span<double> bufs[2] = {dst, std::span<double>(scratch)};
                int cur = (b.order % 2 == 0) ? 1 : 0;
                contract_axis(lambda, b.order, 0, src, bufs[cur]);
                for (int axis = 1; axis < b.order; ++axis) {
                    contract_axis(lambda, b.order, axis, bufs[cur], bufs[1 - cur]);
                    cur = 1 - cur;
                }
            }
            offset += d;
        }
    }
}

TensorFeature apply_rep(const LorentzMatrix& lambda, const TensorFeature& f)
{
    if (static_cast<int>(f.values.size()) != f.spec.dimension())
        throw DimensionError("apply_rep: feature length does not match rep spec");
    std::vector<double> out(f.values.size());
    apply_rep(lambda.m, f.spec, f.values, out);
    return TensorFeature(std::move(out), f.spec);
}

std::vector<double> rep_metric_signs(const RepSpec& spec)
{
    std::vector<double> signs;
    signs.reserve(spec.dimension());
    for (const auto& b : spec.blocks()) {
        const int d = pow4(b.order);
        for (int m = 0; m < b.multiplicity; ++m) {
            for (int idx = 0; idx < d; ++idx) {
                // sign = product over axes of g_{mu mu}; spatial digits contribute -1
                double s = 1.0;
                int rest = idx;
                for (int k = 0; k < b.order; ++k) {
                    if (rest % 4 != 0) s = -s;
                    rest /= 4;
                }
                signs.push_back(s);
            }
        }
    }
    return signs;
}

Eigen::MatrixXd rep_metric(const RepSpec& spec)
{
    const auto s = rep_metric_signs(spec);
    return Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())).asDiagonal();
}

} // namespace lloca
