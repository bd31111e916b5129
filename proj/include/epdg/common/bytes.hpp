// bytes.hpp

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace epdg {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView data);

// accepts upper/lower case; whitespace is skipped so hex dumps can be fed back in
Bytes from_hex(std::string_view hex);

void put_u16(Bytes& out, std::uint16_t v);
void put_u32(Bytes& out, std::uint32_t v);
std::uint16_t get_u16(ByteView in, std::size_t off);
std::uint32_t get_u32(ByteView in, std::size_t off);

// SHA-256 digest as 64 lowercase hex chars
std::string sha256_hex(ByteView data);

bool is_sha256_hex(std::string_view s);

}  // namespace epdg
