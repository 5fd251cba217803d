#pragma once

// Trace bundles: one translated case on disk.
//
//   <dir>/source.pgm  translated.pgm  structure_source.pgm  structure_deformed.pgm
//        forward_field.plsg  inverse_field.plsg  meta.txt
//
// meta.txt holds "key = value" lines, including checksum.<file> entries
// (FNV-1a 64, hex) for every other file.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>

#include "tracediff/deformation.hpp"
#include "tracediff/grid.hpp"

namespace tracediff {

class BundleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TraceBundle {
    std::string case_id;
    Image2D source;
    Image2D translated;
    Image2D structure_source;
    Image2D structure_deformed;
    DeformationField forward_field;
    DeformationField inverse_field;
    std::map<std::string, std::string> meta;
};

inline constexpr std::array<const char*, 4> kBundleImages = {"source", "translated", "structure_source",
                                                             "structure_deformed"};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

struct BundleDiagnostics {
    ResidualStats forward_inverse;
    ResidualStats inverse_forward;
    double positive_jacobian = 0.0;

    double residual_mean_limit = 0.2;
    double residual_max_limit = 0.5;
    double jacobian_limit = 0.995;
    bool passed() const;
    std::string describe() const;
};

BundleDiagnostics diagnose(const TraceBundle& bundle);

// Runs diagnose() and refuses to write a bundle that fails it. Files are
// written to a sibling temporary directory first and renamed into place.
void write_bundle(const std::filesystem::path& dir, const TraceBundle& bundle);

// Verifies checksums; images come back quantised to 8 bits.
TraceBundle read_bundle(const std::filesystem::path& dir);

std::map<std::string, std::string> read_meta(const std::filesystem::path& path);
std::string format_meta(const std::map<std::string, std::string>& meta);

}  // namespace tracediff
