#pragma once

#include <cstddef>
#include <string>

namespace scram::kernels {

/// Available kernel backends. `Scalar` is the reference implementation
/// every other lane is equivalence-tested against. `Portable` uses
/// std::experimental::simd at the build's baseline ISA (SSE2 on x86-64,
/// NEON on aarch64). `Avx2` uses AVX2+FMA intrinsics and is selectable
/// only when the CPU reports support.
enum class Backend { Scalar, Portable, Avx2 };

/// Row-oriented numeric kernels. Inputs are float rasters, accumulation
/// and outputs are double. All lanes compute the same quantities; lanes
/// may reassociate sums, so cross-lane agreement is to rounding, not
/// bitwise.
struct KernelTable {
    // out[j] = scale * dot(q, keys[j*d .. j*d+d)) for j in [0, count)
    void (*scores_row)(const float* q, const float* keys, int count, int d,
                       double scale, double* out);
    // plain dot product, double accumulation
    double (*dot)(const float* a, const float* b, int d);
    // max over v[0..n); n >= 1
    double (*reduce_max)(const double* v, int n);
    // v[i] *= s
    void (*scale_inplace)(double* v, int n, double s);
    // out[c] += sum_j w[j] * rows[j*d + c], c in [0, d)
    void (*weighted_sum_rows)(const double* w, const float* rows, int count,
                              int d, double* out);
};

/// Table for the currently selected backend.
const KernelTable& active();

Backend active_backend();
std::string backend_name(Backend b);

/// True when the backend can run on this machine (Scalar and Portable
/// always can; Avx2 requires cpuid support).
bool backend_available(Backend b);

/// Select a backend explicitly; throws ArgumentError when unavailable.
void select_backend(Backend b);

/// Best available backend (Avx2 > Portable > Scalar). Called implicitly
/// on first use of active().
void select_best_backend();

/// Reference table, for equivalence tests.
const KernelTable& scalar_table();
const KernelTable& portable_table();
#if defined(SCRAM_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace scram::kernels
