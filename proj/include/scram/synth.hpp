#pragma once

#include <cstdint>
#include <vector>

#include "scram/field.hpp"

namespace scram {

/// Dense row-major matrix of doubles (SVD sources and intermediates).
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

struct SyntheticSpec {
    enum class Kind { LowRankSvd, GaussianBlobs, UniformRandom };

    Kind kind = Kind::UniformRandom;
    int height = 1;
    int width = 1;
    int depth = 1;
    std::uint64_t seed = 0;
    // LowRankSvd
    int rank = 4;
    // GaussianBlobs
    int blob_count = 3;
    double blob_amplitude = 1.0;
    double blob_width = 1.5;
};

struct LowRankResult {
    FieldImage queries;
    FieldImage keys;
    int effective_rank = 0;    // channels actually carrying signal
    bool rank_deficient = false;  // source rank < requested d_k
};

struct BlobsResult {
    FieldImage field;
    std::vector<PixelIndex> centers;  // brightest first
};

/// Spatially coherent synthetic score matrix for an H x W raster: a sum
/// of separable query/key Gaussian bumps, so nearby queries prefer
/// nearby keys. rows = cols = H*W.
Matrix smooth_source(int field_height, int field_width, std::uint64_t seed,
                     int bumps = 4);

/// Rank-d_k factor pair of `source`: queries from U sqrt(S), keys from
/// V sqrt(S), so Q K^T reproduces the truncated reconstruction. Row
/// counts must match the requested raster geometries. A source of rank
/// below d_k pads the remaining channels with zeros and sets the flag.
LowRankResult gen_lowrank_qk(const Matrix& source, int query_height,
                             int query_width, int key_height, int key_width,
                             int d_k, std::uint64_t seed);

/// Sum of isotropic Gaussian bumps rasterized on H x W and broadcast
/// across `depth` channels; centers are seeded with pairwise Chebyshev
/// separation >= min_separation (default 3 sigma) and descending
/// amplitudes so peak ranking is stable. Throws ArgumentError when no
/// such placement exists for the seed's rejection budget.
BlobsResult gen_blobs(int height, int width, int depth, int count,
                      double amplitude, double width_pixels, std::uint64_t seed,
                      int min_separation = -1);

/// i.i.d. uniform values in [lo, hi).
FieldImage gen_uniform(int height, int width, int depth, std::uint64_t seed,
                       float lo = -1.0f, float hi = 1.0f);

}  // namespace scram
