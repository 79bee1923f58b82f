#include <atomic>
#include <cstdlib>
#include <string_view>

#include "dbat/kernels.hpp"

namespace dbat::kernels {
namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("DBAT_KERNELS"); env && std::string_view(env) == "scalar")
    return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*> g_forced{nullptr};

}  // namespace

const KernelTable& active() {
  if (const KernelTable* forced = g_forced.load(std::memory_order_acquire)) return *forced;
  static const KernelTable* const chosen = select_default();
  return *chosen;
}

void force_table(const KernelTable* table) { g_forced.store(table, std::memory_order_release); }

}  // namespace dbat::kernels
