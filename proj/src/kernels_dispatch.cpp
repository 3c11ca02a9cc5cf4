#include "ciml/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace ciml::kernels {
namespace {

struct Selected {
  const Ops* ops;
  const char* name;
};

Selected select() {
  const char* forced = std::getenv("CIML_SIMD");
  if (forced && std::strcmp(forced, "scalar") == 0) return {&scalar_ops(), "scalar"};
#if defined(__x86_64__)
  if (forced && std::strcmp(forced, "avx2") == 0) {
    if (!avx2_supported()) throw std::runtime_error("CIML_SIMD=avx2 but CPU lacks AVX2/FMA");
    return {&avx2_ops(), "avx2"};
  }
  if (forced) throw std::runtime_error(std::string("unknown CIML_SIMD value: ") + forced);
  if (avx2_supported()) return {&avx2_ops(), "avx2"};
#else
  if (forced) throw std::runtime_error(std::string("unknown CIML_SIMD value: ") + forced);
#endif
  return {&scalar_ops(), "scalar"};
}

const Selected& selected() {
  static const Selected s = select();
  return s;
}

}  // namespace

const Ops& active() { return *selected().ops; }
const char* backend_name() { return selected().name; }

}  // namespace ciml::kernels
