#pragma once

// PLSG binary grids and 8-bit PGM interchange.
//
// PLSG layout (all little-endian):
//   magic "PLSG" | u32 version (=1) | u32 channels | u32 height | u32 width |
//   float32 payload, channel-major then row-major.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracediff/grid.hpp"

namespace tracediff {

class GridFormatError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, BadVersion, BadDimensions, Truncated, BadPgm };

    GridFormatError(Kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct GridData {
    std::uint32_t channels = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> payload;
};

inline constexpr std::uint32_t kPlsgVersion = 1;

std::vector<std::uint8_t> encode_grid(const GridData& grid);
GridData decode_grid(const std::vector<std::uint8_t>& bytes);

void write_grid(const std::filesystem::path& path, const GridData& grid);
GridData read_grid(const std::filesystem::path& path);

GridData to_grid(const Image2D& img);
GridData to_grid(const VectorField2D& field);
Image2D image_from_grid(const GridData& grid);
VectorField2D field_from_grid(const GridData& grid);

void write_image(const std::filesystem::path& path, const Image2D& img);
void write_field(const std::filesystem::path& path, const VectorField2D& field);
Image2D read_image(const std::filesystem::path& path);
VectorField2D read_field(const std::filesystem::path& path);

// P5 with maxval 255; values are clamped to [0,1] and rounded on export.
std::vector<std::uint8_t> encode_pgm(const Image2D& img);
Image2D decode_pgm(const std::vector<std::uint8_t>& bytes);
void write_pgm(const std::filesystem::path& path, const Image2D& img);
Image2D read_pgm(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace tracediff
