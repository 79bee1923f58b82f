#include "dbat/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>
#define DBAT_HAVE_NEON_KERNELS 1
#endif

namespace dbat::kernels {

#ifdef DBAT_HAVE_NEON_KERNELS
namespace {

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] = s * a[i];
}

// vmulq + vaddq rather than vfmaq: fused rounding would diverge from scalar.
void axpy(double s, const double* x, double* y, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(vs, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] = y[i] + s * x[i];
}

void relu(const double* a, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(a + i);
    const uint64x2_t keep = vcgtq_f64(v, zero);
    vst1q_f64(out + i, vreinterpretq_f64_u64(vandq_u64(keep, vreinterpretq_u64_f64(v))));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_mask(const double* x, const double* g, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t keep = vcgtq_f64(vld1q_f64(x + i), zero);
    vst1q_f64(out + i,
              vreinterpretq_f64_u64(vandq_u64(keep, vreinterpretq_u64_f64(vld1q_f64(g + i)))));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void gemm_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
              std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const float64x2_t va = vdupq_n_f64(aip);
      const double* brow = b + p * m;
      std::size_t j = 0;
      for (; j + 2 <= m; j += 2)
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), vmulq_f64(va, vld1q_f64(brow + j))));
      for (; j < m; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{"neon", add, sub, mul, scale, axpy, relu, relu_mask, gemm_acc};
  return &table;
}

#else

const KernelTable* neon_table() { return nullptr; }

#endif

}  // namespace dbat::kernels
