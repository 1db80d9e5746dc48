// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/kernels.hpp"

#include <cstdlib>
#include <string>

namespace cmcr::kern {

const Tables* avx2_tables_impl();  // defined in kernels_avx2.cpp

const Tables* avx2_tables() {
#if defined(__x86_64__) || defined(_M_X64)
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma"))
    return nullptr;
  return avx2_tables_impl();
#else
  return nullptr;
#endif
}

static const Tables& select() {
  if (const char* env = std::getenv("CMCR_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return scalar_tables();
    if (want == "avx2" && avx2_tables() != nullptr) return *avx2_tables();
    // unknown or unavailable request falls through to auto selection
  }
  if (const Tables* t = avx2_tables()) return *t;
  return scalar_tables();
}

const Tables& active() {
  static const Tables& t = select();
  return t;
}

std::string active_name() { return active().name; }

}  // namespace cmcr::kern
