#include "vecmath.hpp"

#include <cmath>

#if defined(LLOCA_HAVE_LIBMVEC) && defined(__AVX2__)
#include <immintrin.h>
extern "C" __m256d _ZGVdN4v_erf(__m256d);
extern "C" __m256d _ZGVdN4v_exp(__m256d);
#define LLOCA_VECTOR_GELU 1
#endif

namespace lloca::detail {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline void gelu_scalar(double v, double& y, double& slope)
{
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    y = v * cdf;
    slope = cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
}
} // namespace

void gelu_forward(const double* x, double* y, double* slope, std::size_t n)
{
    std::size_t i = 0;
#ifdef LLOCA_VECTOR_GELU
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d is2 = _mm256_set1_pd(kInvSqrt2);
    const __m256d is2pi = _mm256_set1_pd(kInvSqrt2Pi);
    const __m256d mhalf = _mm256_set1_pd(-0.5);
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d cdf = _mm256_mul_pd(half, _mm256_add_pd(one, _ZGVdN4v_erf(_mm256_mul_pd(v, is2))));
        const __m256d pdf = _mm256_mul_pd(is2pi, _ZGVdN4v_exp(_mm256_mul_pd(mhalf, _mm256_mul_pd(v, v))));
        _mm256_storeu_pd(y + i, _mm256_mul_pd(v, cdf));
        _mm256_storeu_pd(slope + i, _mm256_add_pd(cdf, _mm256_mul_pd(v, pdf)));
    }
#endif
    for (; i < n; ++i) gelu_scalar(x[i], y[i], slope[i]);
}

} // namespace lloca::detail
