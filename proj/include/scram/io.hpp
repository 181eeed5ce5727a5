#pragma once

#include <span>
#include <string>
#include <vector>

#include "scram/field.hpp"
#include "scram/patchmatch.hpp"

namespace scram {

// SCRF1 raster-of-vectors format, little-endian:
//   bytes 0..4   magic "SCRF1"
//   byte  5      endianness tag, 0x01 = little (only accepted value)
//   byte  6      dtype tag, 0x01 = f32 (only accepted value)
//   bytes 7..18  u32 H, u32 W, u32 d
//   payload      H*W*d f32 values, row-major by (y, x, channel)

/// Reads a field from an SCRF1 file, or from a binary PGM (P5, maxval
/// 255) mapped to a single channel in [0, 1]. Malformed input throws
/// DataFormatError carrying the offending byte offset.
FieldImage read_field(const std::string& path);

/// Writes SCRF1. The file appears atomically (temp name + rename).
void write_field(const FieldImage& field, const std::string& path);

/// Atomic whole-file text write (reports, CSV).
void write_text(const std::string& content, const std::string& path);

/// Binary PGM write of one grayscale byte per pixel.
void write_pgm(std::span<const std::uint8_t> gray, int height, int width,
               const std::string& path);

/// Min-max normalized grayscale export of a weight row / coverage map.
/// A constant map renders mid-gray (128). Empty input throws.
void export_heatmap(std::span<const double> values, int height, int width,
                    const std::string& path);

/// Neighbour fields persist as an SCRF1 raster of depth 2*kappa:
/// channels (2r, 2r+1) hold field r's (u, v), sentinel entries as -1.
FieldImage encode_neighbour_fields(std::span<const NeighbourField> fields);
std::vector<NeighbourField> decode_neighbour_fields(const FieldImage& raster,
                                                    int key_height,
                                                    int key_width);

}  // namespace scram
