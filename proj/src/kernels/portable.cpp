#include <experimental/simd>

#include "scram/kernels.hpp"

namespace scram::kernels {

// Portable SIMD lane built on std::experimental::simd at the baseline
// ISA of the build: SSE2 vectors on x86-64, NEON on aarch64. Gathers go
// through the generator constructor; sums are per-lane partials folded
// at the end.

namespace stdx = std::experimental;
using vd = stdx::native_simd<double>;

namespace {

constexpr int kW = static_cast<int>(vd::size());

void scores_row_portable(const float* q, const float* keys, int count, int d,
                         double scale, double* out) {
    int j = 0;
    for (; j + kW <= count; j += kW) {
        const float* base = keys + static_cast<std::size_t>(j) * d;
        vd acc = 0.0;
        for (int c = 0; c < d; ++c) {
            const vd kc([&](int lane) {
                return static_cast<double>(base[static_cast<std::size_t>(lane) * d + c]);
            });
            acc += vd(static_cast<double>(q[c])) * kc;
        }
        acc *= vd(scale);
        acc.copy_to(out + j, stdx::element_aligned);
    }
    for (; j < count; ++j) {
        const float* k = keys + static_cast<std::size_t>(j) * d;
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += static_cast<double>(q[c]) * k[c];
        out[j] = scale * acc;
    }
}

double dot_portable(const float* a, const float* b, int d) {
    vd acc = 0.0;
    int c = 0;
    for (; c + kW <= d; c += kW) {
        const vd va([&](int lane) { return static_cast<double>(a[c + lane]); });
        const vd vb([&](int lane) { return static_cast<double>(b[c + lane]); });
        acc += va * vb;
    }
    double s = stdx::reduce(acc);
    for (; c < d; ++c) s += static_cast<double>(a[c]) * b[c];
    return s;
}

double reduce_max_portable(const double* v, int n) {
    int i = 0;
    double m = v[0];
    if (n >= kW) {
        vd acc;
        acc.copy_from(v, stdx::element_aligned);
        i = kW;
        for (; i + kW <= n; i += kW) {
            vd x;
            x.copy_from(v + i, stdx::element_aligned);
            acc = stdx::max(acc, x);
        }
        m = stdx::hmax(acc);
    }
    for (; i < n; ++i) {
        if (v[i] > m) m = v[i];
    }
    return m;
}

void scale_inplace_portable(double* v, int n, double s) {
    const vd vs(s);
    int i = 0;
    for (; i + kW <= n; i += kW) {
        vd x;
        x.copy_from(v + i, stdx::element_aligned);
        x *= vs;
        x.copy_to(v + i, stdx::element_aligned);
    }
    for (; i < n; ++i) v[i] *= s;
}

void weighted_sum_rows_portable(const double* w, const float* rows, int count,
                                int d, double* out) {
    // per-channel lane partials: acc[c] accumulates kW interleaved sums
    for (int c = 0; c < d; ++c) {
        vd acc = 0.0;
        int j = 0;
        for (; j + kW <= count; j += kW) {
            vd wv;
            wv.copy_from(w + j, stdx::element_aligned);
            const vd rv([&](int lane) {
                return static_cast<double>(
                    rows[static_cast<std::size_t>(j + lane) * d + c]);
            });
            acc += wv * rv;
        }
        double s = stdx::reduce(acc);
        for (; j < count; ++j) {
            s += w[j] * static_cast<double>(rows[static_cast<std::size_t>(j) * d + c]);
        }
        out[c] += s;
    }
}

}  // namespace

const KernelTable& portable_table() {
    static const KernelTable t{scores_row_portable, dot_portable,
                               reduce_max_portable, scale_inplace_portable,
                               weighted_sum_rows_portable};
    return t;
}

}  // namespace scram::kernels
