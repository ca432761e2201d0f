#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lloca/minkowski.hpp"

namespace lloca {

/// `multiplicity` copies of the order-`order` tensor representation (dimension 4^order each).
struct RepBlock {
    int order = 0;
    int multiplicity = 1;
    friend bool operator==(const RepBlock&, const RepBlock&) = default;
};

/// Direct sum of tensor representations. Block order is significant.
class RepSpec {
public:
    static constexpr int kDefaultMaxOrder = 2;

    RepSpec() = default;
    explicit RepSpec(std::vector<RepBlock> blocks, int max_order = kDefaultMaxOrder);

    /// Parses the canonical text form, e.g. "8x0+2x1". Throws DimensionError.
    static RepSpec parse(std::string_view text, int max_order = kDefaultMaxOrder);
    static RepSpec scalars(int n) { return RepSpec({{0, n}}); }
    static RepSpec vectors(int n) { return RepSpec({{1, n}}); }

    const std::vector<RepBlock>& blocks() const { return blocks_; }
    int dimension() const { return dim_; }
    int max_order() const { return max_order_; }
    bool scalar_only() const;
    std::string to_string() const;

    friend bool operator==(const RepSpec& a, const RepSpec& b) { return a.blocks_ == b.blocks_; }

private:
    std::vector<RepBlock> blocks_;
    int dim_ = 0;
    int max_order_ = kDefaultMaxOrder;
};

/// Flat feature vector transforming under `spec`.
struct TensorFeature {
    std::vector<double> values;
    RepSpec spec;

    TensorFeature() = default;
    TensorFeature(std::vector<double> v, RepSpec s); // throws DimensionError on length mismatch
};

/// Dense block-diagonal rho(lambda).
Eigen::MatrixXd rep_matrix(const Mat4& lambda, const RepSpec& spec);
inline Eigen::MatrixXd rep_matrix(const LorentzMatrix& lambda, const RepSpec& spec)
{
    return rep_matrix(lambda.m, spec);
}

/// out = rho(lambda) * in, computed one tensor axis at a time.
/// `in` and `out` must not alias and have length spec.dimension().
void apply_rep(const Mat4& lambda, const RepSpec& spec, std::span<const double> in, std::span<double> out);

TensorFeature apply_rep(const LorentzMatrix& lambda, const TensorFeature& f);

/// Diagonal of rep_metric(spec).
std::vector<double> rep_metric_signs(const RepSpec& spec);

/// +1 per scalar slot, g per vector, g (x) g per order-2 block.
Eigen::MatrixXd rep_metric(const RepSpec& spec);

} // namespace lloca
