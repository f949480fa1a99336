#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowprobe/nd/params.hpp"

namespace flowprobe::nd {

// Flat binary parameter checkpoint, magic "FPV1".
// Layout: magic, u32 meta count, meta key/value pairs (u32 length-prefixed
// strings), u64 parameter count, then per parameter: u32 name length, name
// bytes, u32 rank, u64 dims, float64 data. All integers and floats are
// little-endian. Round-trips are bit-exact.
//
// A "content_sha" meta entry (sha256 of the parameter section) is added on
// save and verified on load, so corrupted files fail loudly.

using MetaMap = std::map<std::string, std::string>;

// Serialized parameter section only (deterministic: params are name-sorted).
std::vector<uint8_t> serialize_params(const ParamSet& params);

// Canonical content checksum of a parameter set (hex sha256 of the section).
std::string param_checksum(const ParamSet& params);

void save_checkpoint(const std::string& path, const ParamSet& params, const MetaMap& meta);

struct Checkpoint {
    ParamSet params;
    MetaMap meta;
    std::string content_sha;  // checksum of the parameter section as loaded
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace flowprobe::nd
