#pragma once

#include <cstddef>

namespace lloca::detail {

/// y = x Phi(x) and slope = dy/dx for n values.
void gelu_forward(const double* x, double* y, double* slope, std::size_t n);

} // namespace lloca::detail
