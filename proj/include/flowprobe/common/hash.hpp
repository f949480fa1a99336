#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowprobe {

// SHA-256 of a byte buffer, hex-encoded. Backed by OpenSSL's EVP digest.
std::string sha256_hex(const void* data, size_t len);

inline std::string sha256_hex(const std::vector<uint8_t>& bytes) {
    return sha256_hex(bytes.data(), bytes.size());
}

inline std::string sha256_hex(const std::string& s) {
    return sha256_hex(s.data(), s.size());
}

}  // namespace flowprobe
