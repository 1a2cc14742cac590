#include "tabudrop/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace tabudrop::kernels {
namespace {

const Ops* pick_default() {
    if (const char* env = std::getenv("TABUDROP_KERNEL")) {
        std::string want(env);
#if defined(__x86_64__) || defined(_M_X64)
        if (want == "avx2" && avx2_supported()) return &avx2_ops();
#endif
#if defined(__aarch64__)
        if (want == "neon") return &neon_ops();
#endif
        if (want == "scalar") return &scalar_ops();
        // Unknown or unsupported request falls through to auto-detection.
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) return &avx2_ops();
#endif
#if defined(__aarch64__)
    return &neon_ops();
#endif
    return &scalar_ops();
}

std::atomic<const Ops*>& slot() {
    static std::atomic<const Ops*> current{pick_default()};
    return current;
}

}  // namespace

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported() {
#if defined(__GNUC__) || defined(__clang__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}
#endif

const Ops& active() { return *slot().load(std::memory_order_relaxed); }

bool force(std::string_view name) {
    if (name == "scalar") {
        slot().store(&scalar_ops());
        return true;
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (name == "avx2" && avx2_supported()) {
        slot().store(&avx2_ops());
        return true;
    }
#endif
#if defined(__aarch64__)
    if (name == "neon") {
        slot().store(&neon_ops());
        return true;
    }
#endif
    return false;
}

std::vector<const Ops*> available() {
    std::vector<const Ops*> sets{&scalar_ops()};
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) sets.push_back(&avx2_ops());
#endif
#if defined(__aarch64__)
    sets.push_back(&neon_ops());
#endif
    return sets;
}

}  // namespace tabudrop::kernels
