#include <cstdlib>
#include <string_view>

#include "icrl/kernels.hpp"

namespace icrl::kernels {

#if defined(ICRL_HAVE_AVX2)
namespace detail {
extern const KernelTable kAvx2Table;
}
#endif

namespace {

bool cpu_has_avx2_fma() noexcept {
#if defined(ICRL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& select_table() noexcept {
  const char* env = std::getenv("ICRL_KERNELS");
  const std::string_view want = env ? env : "";
  if (want == "scalar") return scalar_table();
  if (const KernelTable* t = avx2_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable* avx2_table() noexcept {
#if defined(ICRL_HAVE_AVX2)
  static const bool ok = cpu_has_avx2_fma();
  return ok ? &detail::kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() noexcept {
  static const KernelTable& table = select_table();
  return table;
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (const KernelTable* t = avx2_table()) out.push_back(t);
  return out;
}

}  // namespace icrl::kernels
