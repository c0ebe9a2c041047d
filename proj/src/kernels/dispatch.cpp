// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string>

#include "fedprune/error.hpp"
#include "fedprune/kernels.hpp"

namespace fedprune::kernels {

#if defined(FEDPRUNE_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(FEDPRUNE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  if (const char* forced = std::getenv("FEDPRUNE_KERNEL"); forced != nullptr && *forced != '\0') {
    const Isa isa = parse_isa(forced);
    if (isa == Isa::scalar) return &scalar_table();
    if (const KernelTable* t = avx2_table()) return t;
    throw ConfigError(std::string("FEDPRUNE_KERNEL=") + forced + " is not supported on this CPU");
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(FEDPRUNE_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  if (supported) return &avx2_kernels();
#endif
  return nullptr;
}

const KernelTable& active() { return *current(); }

void select(Isa isa) {
  if (isa == Isa::scalar) {
    current() = &scalar_table();
    return;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr) throw ConfigError("avx2 kernels are not available on this CPU");
  current() = t;
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  throw ConfigError("unknown kernel ISA '" + std::string(name) + "' (expected scalar or avx2)");
}

}  // namespace fedprune::kernels
