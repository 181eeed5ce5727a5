#if defined(SCRAM_HAVE_AVX2)

#include <immintrin.h>

#include "scram/kernels.hpp"

namespace scram::kernels {

// AVX2+FMA lane. This translation unit is the only one compiled with
// -mavx2 -mfma; dispatch guards it behind a cpuid check.

namespace {

inline double hsum_pd(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double hmax_pd(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

void scores_row_avx2(const float* q, const float* keys, int count, int d,
                     double scale, double* out) {
    const __m256d vscale = _mm256_set1_pd(scale);
    int j = 0;
    if (d <= 8) {
        // 8 keys per iteration: per-channel strided gather, f64 FMA
        const __m256i idx = _mm256_setr_epi32(0, d, 2 * d, 3 * d, 4 * d, 5 * d,
                                              6 * d, 7 * d);
        for (; j + 8 <= count; j += 8) {
            const float* base = keys + static_cast<std::size_t>(j) * d;
            __m256d acc_lo = _mm256_setzero_pd();
            __m256d acc_hi = _mm256_setzero_pd();
            for (int c = 0; c < d; ++c) {
                __m256 kc = _mm256_i32gather_ps(base + c, idx, 4);
                __m256d qc = _mm256_set1_pd(static_cast<double>(q[c]));
                acc_lo = _mm256_fmadd_pd(qc, _mm256_cvtps_pd(_mm256_castps256_ps128(kc)), acc_lo);
                acc_hi = _mm256_fmadd_pd(qc, _mm256_cvtps_pd(_mm256_extractf128_ps(kc, 1)), acc_hi);
            }
            _mm256_storeu_pd(out + j, _mm256_mul_pd(acc_lo, vscale));
            _mm256_storeu_pd(out + j + 4, _mm256_mul_pd(acc_hi, vscale));
        }
    }
    for (; j < count; ++j) {
        const float* k = keys + static_cast<std::size_t>(j) * d;
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += static_cast<double>(q[c]) * k[c];
        out[j] = scale * acc;
    }
}

double dot_avx2(const float* a, const float* b, int d) {
    __m256d acc = _mm256_setzero_pd();
    int c = 0;
    for (; c + 4 <= d; c += 4) {
        __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + c));
        __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + c));
        acc = _mm256_fmadd_pd(va, vb, acc);
    }
    double s = hsum_pd(acc);
    for (; c < d; ++c) s += static_cast<double>(a[c]) * b[c];
    return s;
}

double reduce_max_avx2(const double* v, int n) {
    int i = 0;
    double m = v[0];
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(v);
        i = 4;
        for (; i + 4 <= n; i += 4) {
            acc = _mm256_max_pd(acc, _mm256_loadu_pd(v + i));
        }
        m = hmax_pd(acc);
    }
    for (; i < n; ++i) {
        if (v[i] > m) m = v[i];
    }
    return m;
}

void scale_inplace_avx2(double* v, int n, double s) {
    const __m256d vs = _mm256_set1_pd(s);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(v + i, _mm256_mul_pd(_mm256_loadu_pd(v + i), vs));
    }
    for (; i < n; ++i) v[i] *= s;
}

void weighted_sum_rows_avx2(const double* w, const float* rows, int count,
                            int d, double* out) {
    if (d <= 8) {
        const __m256i idx = _mm256_setr_epi32(0, d, 2 * d, 3 * d, 4 * d, 5 * d,
                                              6 * d, 7 * d);
        for (int c = 0; c < d; ++c) {
            __m256d acc_lo = _mm256_setzero_pd();
            __m256d acc_hi = _mm256_setzero_pd();
            int j = 0;
            for (; j + 8 <= count; j += 8) {
                const float* base = rows + static_cast<std::size_t>(j) * d + c;
                __m256 rc = _mm256_i32gather_ps(base, idx, 4);
                acc_lo = _mm256_fmadd_pd(_mm256_loadu_pd(w + j),
                                         _mm256_cvtps_pd(_mm256_castps256_ps128(rc)),
                                         acc_lo);
                acc_hi = _mm256_fmadd_pd(_mm256_loadu_pd(w + j + 4),
                                         _mm256_cvtps_pd(_mm256_extractf128_ps(rc, 1)),
                                         acc_hi);
            }
            double s = hsum_pd(_mm256_add_pd(acc_lo, acc_hi));
            for (; j < count; ++j) {
                s += w[j] * static_cast<double>(rows[static_cast<std::size_t>(j) * d + c]);
            }
            out[c] += s;
        }
        return;
    }
    // wide rows: vectorize across channels instead
    for (int j = 0; j < count; ++j) {
        const float* r = rows + static_cast<std::size_t>(j) * d;
        const __m256d wj = _mm256_set1_pd(w[j]);
        int c = 0;
        for (; c + 4 <= d; c += 4) {
            __m256d rv = _mm256_cvtps_pd(_mm_loadu_ps(r + c));
            _mm256_storeu_pd(out + c,
                             _mm256_fmadd_pd(wj, rv, _mm256_loadu_pd(out + c)));
        }
        for (; c < d; ++c) out[c] += w[j] * static_cast<double>(r[c]);
    }
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable t{scores_row_avx2, dot_avx2, reduce_max_avx2,
                               scale_inplace_avx2, weighted_sum_rows_avx2};
    return t;
}

}  // namespace scram::kernels

#endif  // SCRAM_HAVE_AVX2
