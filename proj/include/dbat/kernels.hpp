#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops used by the tensor ops. Each instruction set gets
// its own table; the scalar table is the reference. Every vector variant is
// required to be bit-identical to the scalar reference: elementwise ops are
// exact per lane, and gemm uses the i-k-j order with a separate multiply and
// add (never fused), so vectorizing over j does not change any rounding.
namespace dbat::kernels {

struct KernelTable {
  std::string_view name;
  // out[i] = a[i] + b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] - b[i]
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = s * a[i]
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // y[i] += s * x[i]
  void (*axpy)(double s, const double* x, double* y, std::size_t n);
  // out[i] = max(a[i], 0)
  void (*relu)(const double* a, double* out, std::size_t n);
  // out[i] = x[i] > 0 ? g[i] : 0
  void (*relu_mask)(const double* x, const double* g, double* out, std::size_t n);
  // c[n x m] += a[n x k] * b[k x m], row-major, i-k-j order.
  void (*gemm_acc)(const double* a, const double* b, double* c, std::size_t n,
                   std::size_t k, std::size_t m);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Table used by the tensor ops. Chosen once at first use: the widest variant
// the CPU supports, unless DBAT_KERNELS=scalar is set in the environment.
const KernelTable& active();

// Test hook: overrides the active table (pass nullptr to restore the default).
void force_table(const KernelTable* table);

}  // namespace dbat::kernels
