#include "scram/kernels.hpp"

namespace scram::kernels {

// Reference lane. Plain ascending-index loops; every other lane is
// tested against these.

namespace {

void scores_row_scalar(const float* q, const float* keys, int count, int d,
                       double scale, double* out) {
    for (int j = 0; j < count; ++j) {
        const float* k = keys + static_cast<std::size_t>(j) * d;
        double acc = 0.0;
        for (int c = 0; c < d; ++c) {
            acc += static_cast<double>(q[c]) * static_cast<double>(k[c]);
        }
        out[j] = scale * acc;
    }
}

double dot_scalar(const float* a, const float* b, int d) {
    double acc = 0.0;
    for (int c = 0; c < d; ++c) {
        acc += static_cast<double>(a[c]) * static_cast<double>(b[c]);
    }
    return acc;
}

double reduce_max_scalar(const double* v, int n) {
    double m = v[0];
    for (int i = 1; i < n; ++i) {
        if (v[i] > m) m = v[i];
    }
    return m;
}

void scale_inplace_scalar(double* v, int n, double s) {
    for (int i = 0; i < n; ++i) v[i] *= s;
}

void weighted_sum_rows_scalar(const double* w, const float* rows, int count,
                              int d, double* out) {
    for (int j = 0; j < count; ++j) {
        const float* r = rows + static_cast<std::size_t>(j) * d;
        const double wj = w[j];
        for (int c = 0; c < d; ++c) {
            out[c] += wj * static_cast<double>(r[c]);
        }
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t{scores_row_scalar, dot_scalar, reduce_max_scalar,
                               scale_inplace_scalar, weighted_sum_rows_scalar};
    return t;
}

}  // namespace scram::kernels
