#include "solo/kernels.hpp"

#include <cstdlib>
#include <string>

namespace solo::kernels {

namespace {

#define SOLO_DECLARE_SLOT(ret, name, args, call) ret(*name) args = nullptr;

struct DispatchTable {
  SOLO_KERNEL_LIST(SOLO_DECLARE_SLOT)
  const char* backend = "";
};

#undef SOLO_DECLARE_SLOT

#define SOLO_BIND_SLOT(ret, name, args, call) table.name = ns::name;

DispatchTable make_scalar_table() {
  DispatchTable table;
  namespace ns = scalar;
  SOLO_KERNEL_LIST(SOLO_BIND_SLOT)
  table.backend = "scalar";
  return table;
}

#if defined(SOLO_HAVE_AVX2_BUILD)
DispatchTable make_avx2_table() {
  DispatchTable table;
  namespace ns = avx2;
  SOLO_KERNEL_LIST(SOLO_BIND_SLOT)
  table.backend = "avx2";
  return table;
}
#endif

#undef SOLO_BIND_SLOT

DispatchTable select_startup_table() {
  const char* env = std::getenv("SOLO_KERNELS");
  const std::string requested = env != nullptr ? env : "";
#if defined(SOLO_HAVE_AVX2_BUILD)
  if (requested == "avx2" && cpu_has_avx2()) return make_avx2_table();
  if (requested.empty() && cpu_has_avx2()) return make_avx2_table();
#endif
  return make_scalar_table();
}

DispatchTable& table() {
  static DispatchTable t = select_startup_table();
  return t;
}

}  // namespace

#define SOLO_DEFINE_DISPATCH(ret, name, args, call) \
  ret name args { return table().name call; }

SOLO_KERNEL_LIST(SOLO_DEFINE_DISPATCH)

#undef SOLO_DEFINE_DISPATCH

std::string_view active_backend() { return table().backend; }

bool set_backend(std::string_view name) {
  if (name == "scalar") {
    table() = make_scalar_table();
    return true;
  }
#if defined(SOLO_HAVE_AVX2_BUILD)
  if (name == "avx2" && cpu_has_avx2()) {
    table() = make_avx2_table();
    return true;
  }
#endif
  return false;
}

}  // namespace solo::kernels
