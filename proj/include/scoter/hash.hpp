#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <string_view>

namespace scoter {

/// Lowercase hex SHA-256 of the given bytes (OpenSSL-backed).
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a whole file's contents. Throws if the file cannot be read.
std::string sha256_file(const std::string& path);

}  // namespace scoter
