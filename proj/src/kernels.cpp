#include "hsc/kernels.hpp"

namespace hsc::kernels {

namespace scalar {

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void div(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

}  // namespace scalar

namespace {

struct Dispatch {
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*div)(const double*, const double*, double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
};

constexpr Dispatch kScalar{scalar::add, scalar::sub, scalar::mul, scalar::div,
                           scalar::axpy, scalar::scale, scalar::dot, scalar::sum};

#ifdef HSC_HAVE_AVX2
constexpr Dispatch kAvx2{avx2::add, avx2::sub, avx2::mul, avx2::div,
                         avx2::axpy, avx2::scale, avx2::dot, avx2::sum};
#endif

Isa g_isa = avx2_supported() ? Isa::avx2 : Isa::scalar;

const Dispatch& table() {
#ifdef HSC_HAVE_AVX2
  if (g_isa == Isa::avx2) return kAvx2;
#endif
  return kScalar;
}

}  // namespace

bool avx2_supported() {
#ifdef HSC_HAVE_AVX2
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa active_isa() { return g_isa; }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported()) return;
  g_isa = isa;
}

void add(const double* a, const double* b, double* out, std::size_t n) { table().add(a, b, out, n); }
void sub(const double* a, const double* b, double* out, std::size_t n) { table().sub(a, b, out, n); }
void mul(const double* a, const double* b, double* out, std::size_t n) { table().mul(a, b, out, n); }
void div(const double* a, const double* b, double* out, std::size_t n) { table().div(a, b, out, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }
void scale(double alpha, const double* x, double* out, std::size_t n) { table().scale(alpha, x, out, n); }
double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
double sum(const double* a, std::size_t n) { return table().sum(a, n); }

}  // namespace hsc::kernels
