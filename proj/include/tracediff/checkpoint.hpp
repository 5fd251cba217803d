#pragma once

// Model checkpoints.
//
// Layout (little-endian):
//   magic "PLSC" | u32 version | u64 header length | header text | float64 payload
// The header is line-oriented text:
//   tensor <name> <channels> <height> <width> <offset> <count>
//   meta <key> <value...>
// Tensor names are prefixed "param/", "adam_m/" or "adam_v/". Offsets count
// doubles from the start of the payload.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracediff/networks.hpp"

namespace tracediff {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;  // "denoiser" or "regnet"
    NetConfig net;
    ModelParams params;
    AdamState adam;
    std::map<std::string, std::string> meta;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace tracediff
