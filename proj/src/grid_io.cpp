#include "tracediff/grid_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tracediff {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::size_t kHeaderBytes = 20;

}  // namespace

std::vector<std::uint8_t> encode_grid(const GridData& grid) {
    const std::size_t count = static_cast<std::size_t>(grid.channels) * grid.height * grid.width;
    if (grid.payload.size() != count) {
        throw GridFormatError(GridFormatError::Kind::BadDimensions,
                              "grid payload length does not match declared dimensions");
    }
    std::vector<std::uint8_t> out = {'P', 'L', 'S', 'G'};
    out.reserve(kHeaderBytes + 4 * count);
    put_u32(out, kPlsgVersion);
    put_u32(out, grid.channels);
    put_u32(out, grid.height);
    put_u32(out, grid.width);
    for (float f : grid.payload) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

GridData decode_grid(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "PLSG", 4) != 0) {
        throw GridFormatError(GridFormatError::Kind::BadMagic, "not a PLSG grid (bad magic)");
    }
    if (bytes.size() < kHeaderBytes) {
        throw GridFormatError(GridFormatError::Kind::Truncated, "PLSG header truncated");
    }
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kPlsgVersion) {
        throw GridFormatError(GridFormatError::Kind::BadVersion,
                              "unsupported PLSG version " + std::to_string(version));
    }
    GridData grid;
    grid.channels = get_u32(bytes.data() + 8);
    grid.height = get_u32(bytes.data() + 12);
    grid.width = get_u32(bytes.data() + 16);
    const std::uint64_t count =
        static_cast<std::uint64_t>(grid.channels) * grid.height * grid.width;
    if (grid.channels == 0 || count > (1ull << 32)) {
        throw GridFormatError(GridFormatError::Kind::BadDimensions, "PLSG dimensions invalid");
    }
    if (bytes.size() - kHeaderBytes < count * 4) {
        throw GridFormatError(GridFormatError::Kind::Truncated,
                              "PLSG payload truncated: expected " + std::to_string(count * 4) +
                                  " bytes, found " + std::to_string(bytes.size() - kHeaderBytes));
    }
    grid.payload.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        grid.payload[i] = std::bit_cast<float>(get_u32(bytes.data() + kHeaderBytes + 4 * i));
    }
    return grid;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GridFormatError(GridFormatError::Kind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GridFormatError(GridFormatError::Kind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw GridFormatError(GridFormatError::Kind::Io, "short write to " + path.string());
}

void write_grid(const std::filesystem::path& path, const GridData& grid) {
    write_file_bytes(path, encode_grid(grid));
}

GridData read_grid(const std::filesystem::path& path) { return decode_grid(read_file_bytes(path)); }

GridData to_grid(const Image2D& img) {
    return {1, static_cast<std::uint32_t>(img.height()), static_cast<std::uint32_t>(img.width()),
            img.values()};
}

GridData to_grid(const VectorField2D& field) {
    GridData g{2, static_cast<std::uint32_t>(field.height()),
               static_cast<std::uint32_t>(field.width()), {}};
    g.payload = field.ux().values();
    g.payload.insert(g.payload.end(), field.uy().data().begin(), field.uy().data().end());
    return g;
}

Image2D image_from_grid(const GridData& grid) {
    if (grid.channels != 1) {
        throw GridFormatError(GridFormatError::Kind::BadDimensions,
                              "expected a 1-channel grid, found " + std::to_string(grid.channels));
    }
    return Image2D(static_cast<int>(grid.height), static_cast<int>(grid.width), grid.payload);
}

VectorField2D field_from_grid(const GridData& grid) {
    if (grid.channels != 2) {
        throw GridFormatError(GridFormatError::Kind::BadDimensions,
                              "expected a 2-channel grid, found " + std::to_string(grid.channels));
    }
    const std::size_t plane = static_cast<std::size_t>(grid.height) * grid.width;
    const int h = static_cast<int>(grid.height);
    const int w = static_cast<int>(grid.width);
    return VectorField2D(
        Image2D(h, w, std::vector<float>(grid.payload.begin(), grid.payload.begin() + plane)),
        Image2D(h, w, std::vector<float>(grid.payload.begin() + plane, grid.payload.end())));
}

void write_image(const std::filesystem::path& path, const Image2D& img) { write_grid(path, to_grid(img)); }
void write_field(const std::filesystem::path& path, const VectorField2D& field) {
    write_grid(path, to_grid(field));
}
Image2D read_image(const std::filesystem::path& path) { return image_from_grid(read_grid(path)); }
VectorField2D read_field(const std::filesystem::path& path) { return field_from_grid(read_grid(path)); }

std::vector<std::uint8_t> encode_pgm(const Image2D& img) {
    const std::string header =
        "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + img.size());
    for (float v : img.data()) {
        const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
        out.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
    }
    return out;
}

Image2D decode_pgm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto fail = [](const std::string& msg) {
        return GridFormatError(GridFormatError::Kind::BadPgm, "PGM: " + msg);
    };
    auto skip_space = [&] {
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
    auto read_int = [&] {
        skip_space();
        long value = 0;
        std::size_t digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > (1L << 24)) throw fail("header value out of range");
            ++pos;
            ++digits;
        }
        if (digits == 0) throw fail("malformed header");
        return static_cast<int>(value);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("not a P5 file");
    pos = 2;
    const int width = read_int();
    const int height = read_int();
    const int maxval = read_int();
    if (maxval <= 0 || maxval > 255) throw fail("only 8-bit maxval is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("malformed header");
    ++pos;
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (bytes.size() - pos < count) {
        throw GridFormatError(GridFormatError::Kind::Truncated, "PGM payload truncated");
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        data[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
    }
    return Image2D(height, width, std::move(data));
}

void write_pgm(const std::filesystem::path& path, const Image2D& img) {
    write_file_bytes(path, encode_pgm(img));
}

Image2D read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file_bytes(path)); }

}  // namespace tracediff
