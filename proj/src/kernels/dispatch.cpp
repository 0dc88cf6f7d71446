#include <cstdlib>
#include <string_view>

#include "hybridflow/kernels.hpp"

namespace hybridflow::kernels {

#ifdef HYBRIDFLOW_HAVE_AVX2
const KernelTable& avx2_table_unchecked();
#endif

const KernelTable* avx2_table() {
#ifdef HYBRIDFLOW_HAVE_AVX2
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &avx2_table_unchecked() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    static const KernelTable& table = [] () -> const KernelTable& {
        const char* env = std::getenv("HYBRIDFLOW_KERNELS");
        if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
        if (const auto* t = avx2_table()) return *t;
        return scalar_table();
    }();
    return table;
}

} // namespace hybridflow::kernels
