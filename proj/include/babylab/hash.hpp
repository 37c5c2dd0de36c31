#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace babylab {

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

std::string hash_file(const std::string& path);

}  // namespace babylab
