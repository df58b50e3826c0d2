#pragma once

#include <string>
#include <string_view>

namespace buzz {

// Lowercase hex SHA-256; used for cache keys and content-addressed stores.
std::string sha256_hex(std::string_view data);

}  // namespace buzz
