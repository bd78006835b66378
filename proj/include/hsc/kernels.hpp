#pragma once

#include <cstddef>

// Dense double-precision inner-loop kernels. Every entry point has a scalar
// reference implementation and, on x86 hardware with AVX2, a vectorized
// variant selected once at startup. force_isa() pins the path for tests.

namespace hsc::kernels {

enum class Isa { scalar, avx2 };

bool avx2_supported();
Isa active_isa();
void force_isa(Isa isa);

// out = a + b, etc. All arrays length n, no aliasing requirements beyond
// out being writable (in-place a==out or b==out is allowed).
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void div(const double* a, const double* b, double* out, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
// out = alpha * x
void scale(double alpha, const double* x, double* out, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);

namespace scalar {
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void div(const double* a, const double* b, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
}  // namespace scalar

#ifdef HSC_HAVE_AVX2
namespace avx2 {
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void div(const double* a, const double* b, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
}  // namespace avx2
#endif

}  // namespace hsc::kernels
