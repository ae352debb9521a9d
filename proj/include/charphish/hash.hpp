#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace charphish {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(std::string_view s);

}  // namespace charphish
