#include "scram/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

namespace scram {

namespace {

constexpr char kMagic[5] = {'S', 'C', 'R', 'F', '1'};
constexpr std::uint8_t kLittleEndianTag = 0x01;
constexpr std::uint8_t kF32Tag = 0x01;
constexpr std::uint32_t kMaxDim = 1u << 20;

std::uint32_t read_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32le(std::uint32_t v, std::ostream& os) {
    const std::uint8_t b[4] = {
        static_cast<std::uint8_t>(v & 0xff),
        static_cast<std::uint8_t>((v >> 8) & 0xff),
        static_cast<std::uint8_t>((v >> 16) & 0xff),
        static_cast<std::uint8_t>((v >> 24) & 0xff),
    };
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open '" + path + "'", 0);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

// atomic write: temp file in the target directory, then rename
void write_atomic(const std::string& path,
                  const std::function<void(std::ostream&)>& body) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataFormatError("cannot open '" + tmp.string() + "' for write", 0);
        body(out);
        if (!out) throw DataFormatError("write failed for '" + tmp.string() + "'", 0);
    }
    fs::rename(tmp, target);
}

FieldImage read_scrf(const std::vector<std::uint8_t>& bytes,
                     const std::string& path) {
    if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 5) != 0) {
        throw DataFormatError("bad magic in '" + path + "'", 0);
    }
    if (bytes.size() < 7) {
        throw DataFormatError("truncated header in '" + path + "'", bytes.size());
    }
    if (bytes[5] != kLittleEndianTag) {
        throw DataFormatError("unsupported endianness tag in '" + path + "'", 5);
    }
    if (bytes[6] != kF32Tag) {
        throw DataFormatError("unsupported dtype tag in '" + path + "'", 6);
    }
    if (bytes.size() < 19) {
        throw DataFormatError("truncated header in '" + path + "'", bytes.size());
    }
    const std::uint32_t h = read_u32le(bytes.data() + 7);
    const std::uint32_t w = read_u32le(bytes.data() + 11);
    const std::uint32_t d = read_u32le(bytes.data() + 15);
    if (h < 1 || h > kMaxDim) throw DataFormatError("bad height in '" + path + "'", 7);
    if (w < 1 || w > kMaxDim) throw DataFormatError("bad width in '" + path + "'", 11);
    if (d < 1 || d > kMaxDim) throw DataFormatError("bad depth in '" + path + "'", 15);
    const std::uint64_t count =
        static_cast<std::uint64_t>(h) * w * d;
    if (count > (std::uint64_t(1) << 31)) {
        throw DataFormatError("dimension overflow in '" + path + "'", 7);
    }
    const std::uint64_t payload = count * 4;
    if (bytes.size() - 19 < payload) {
        throw DataFormatError("truncated payload in '" + path + "'", bytes.size());
    }
    std::vector<float> data(count);
    std::memcpy(data.data(), bytes.data() + 19, payload);
    return FieldImage(static_cast<int>(h), static_cast<int>(w),
                      static_cast<int>(d), std::move(data));
}

FieldImage read_pgm(const std::vector<std::uint8_t>& bytes,
                    const std::string& path) {
    std::size_t pos = 2;  // past "P5"
    auto skip_space = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) -> int {
        skip_space();
        const std::size_t start = pos;
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > kMaxDim) throw DataFormatError(std::string("oversized ") + what +
                                                   " in '" + path + "'", start);
            ++pos;
        }
        if (pos == start) {
            throw DataFormatError(std::string("missing ") + what + " in '" + path + "'",
                                  start);
        }
        return static_cast<int>(v);
    };

    const int w = read_int("width");
    const int h = read_int("height");
    const int maxval = read_int("maxval");
    if (maxval != 255) {
        throw DataFormatError("PGM maxval must be 255 in '" + path + "'", pos);
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw DataFormatError("missing raster separator in '" + path + "'", pos);
    }
    ++pos;  // single whitespace byte before the raster
    const std::size_t need = static_cast<std::size_t>(w) * h;
    if (bytes.size() - pos < need) {
        throw DataFormatError("truncated PGM payload in '" + path + "'", bytes.size());
    }
    std::vector<float> data(need);
    for (std::size_t i = 0; i < need; ++i) {
        data[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    }
    return FieldImage(h, w, 1, std::move(data));
}

}  // namespace

FieldImage read_field(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_all(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
        return read_pgm(bytes, path);
    }
    return read_scrf(bytes, path);
}

void write_field(const FieldImage& field, const std::string& path) {
    write_atomic(path, [&](std::ostream& os) {
        os.write(kMagic, 5);
        const char tags[2] = {static_cast<char>(kLittleEndianTag),
                              static_cast<char>(kF32Tag)};
        os.write(tags, 2);
        write_u32le(static_cast<std::uint32_t>(field.height()), os);
        write_u32le(static_cast<std::uint32_t>(field.width()), os);
        write_u32le(static_cast<std::uint32_t>(field.depth()), os);
        os.write(reinterpret_cast<const char*>(field.data().data()),
                 static_cast<std::streamsize>(field.data().size() * 4));
    });
}

void write_text(const std::string& content, const std::string& path) {
    write_atomic(path, [&](std::ostream& os) { os << content; });
}

void write_pgm(std::span<const std::uint8_t> gray, int height, int width,
               const std::string& path) {
    if (gray.size() != static_cast<std::size_t>(height) * width) {
        throw DimensionError("write_pgm: pixel count mismatch");
    }
    write_atomic(path, [&](std::ostream& os) {
        os << "P5\n" << width << ' ' << height << "\n255\n";
        os.write(reinterpret_cast<const char*>(gray.data()),
                 static_cast<std::streamsize>(gray.size()));
    });
}

void export_heatmap(std::span<const double> values, int height, int width,
                    const std::string& path) {
    if (values.empty() || height < 1 || width < 1 ||
        values.size() != static_cast<std::size_t>(height) * width) {
        throw ArgumentError("export_heatmap: empty or mismatched input");
    }
    double lo = values[0], hi = values[0];
    for (const double v : values) {
        if (!std::isfinite(v)) {
            throw ArgumentError("export_heatmap: non-finite value");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<std::uint8_t> gray(values.size());
    if (hi == lo) {
        std::fill(gray.begin(), gray.end(), static_cast<std::uint8_t>(128));
    } else {
        const double scale = 255.0 / (hi - lo);
        for (std::size_t i = 0; i < values.size(); ++i) {
            gray[i] = static_cast<std::uint8_t>(
                std::lround((values[i] - lo) * scale));
        }
    }
    write_pgm(gray, height, width, path);
}

FieldImage encode_neighbour_fields(std::span<const NeighbourField> fields) {
    if (fields.empty()) throw ArgumentError("encode_neighbour_fields: no fields");
    const int h = fields.front().height();
    const int w = fields.front().width();
    const int depth = 2 * static_cast<int>(fields.size());
    std::vector<float> data(static_cast<std::size_t>(h) * w * depth);
    for (int i = 0; i < h * w; ++i) {
        for (std::size_t r = 0; r < fields.size(); ++r) {
            const PixelIndex e = fields[r].at_linear(i);
            data[static_cast<std::size_t>(i) * depth + 2 * r] =
                static_cast<float>(e.y);
            data[static_cast<std::size_t>(i) * depth + 2 * r + 1] =
                static_cast<float>(e.x);
        }
    }
    return FieldImage(h, w, depth, std::move(data));
}

std::vector<NeighbourField> decode_neighbour_fields(const FieldImage& raster,
                                                    int key_height,
                                                    int key_width) {
    if (raster.depth() % 2 != 0) {
        throw DimensionError("decode_neighbour_fields: depth must be even");
    }
    const int kappa = raster.depth() / 2;
    std::vector<NeighbourField> fields(
        static_cast<std::size_t>(kappa),
        NeighbourField(raster.height(), raster.width(), key_height, key_width));
    for (int i = 0; i < raster.pixels(); ++i) {
        const auto vec = raster.at_linear(i);
        for (int r = 0; r < kappa; ++r) {
            const int u = static_cast<int>(vec[2 * r]);
            const int v = static_cast<int>(vec[2 * r + 1]);
            PixelIndex e{u, v};
            if (!NeighbourField::is_sentinel(e) &&
                (u >= key_height || v >= key_width)) {
                throw DataFormatError("neighbour field entry out of bounds", 19);
            }
            fields[static_cast<std::size_t>(r)].set_linear(i, e);
        }
    }
    return fields;
}

}  // namespace scram
