#include <atomic>

#include "scram/errors.hpp"
#include "scram/kernels.hpp"

namespace scram::kernels {

namespace {

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::Scalar};

bool cpu_has_avx2() {
#if defined(SCRAM_HAVE_AVX2)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

}  // namespace

bool backend_available(Backend b) {
    switch (b) {
        case Backend::Scalar:
        case Backend::Portable:
            return true;
        case Backend::Avx2:
            return cpu_has_avx2();
    }
    return false;
}

std::string backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Portable: return "portable";
        case Backend::Avx2: return "avx2";
    }
    return "unknown";
}

void select_backend(Backend b) {
    if (!backend_available(b)) {
        throw ArgumentError("kernel backend not available on this machine: " +
                            backend_name(b));
    }
    switch (b) {
        case Backend::Scalar:
            g_table.store(&scalar_table());
            break;
        case Backend::Portable:
            g_table.store(&portable_table());
            break;
        case Backend::Avx2:
#if defined(SCRAM_HAVE_AVX2)
            g_table.store(&avx2_table());
            break;
#else
            throw ArgumentError("avx2 lane not compiled in");
#endif
    }
    g_backend.store(b);
}

void select_best_backend() {
    if (backend_available(Backend::Avx2)) {
        select_backend(Backend::Avx2);
    } else {
        select_backend(Backend::Portable);
    }
}

const KernelTable& active() {
    const KernelTable* t = g_table.load();
    if (t == nullptr) {
        select_best_backend();
        t = g_table.load();
    }
    return *t;
}

Backend active_backend() {
    if (g_table.load() == nullptr) select_best_backend();
    return g_backend.load();
}

}  // namespace scram::kernels
