#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace forge {

// 64-bit FNV-1a. Any single-byte substitution changes the value, because
// every round (xor, multiply by an odd prime) is a bijection on the state.
class Hasher {
 public:
  Hasher& update(std::string_view bytes) noexcept;
  // Length-prefixed, so field boundaries cannot alias.
  Hasher& field(std::string_view bytes) noexcept;
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

std::uint64_t digest_bytes(std::string_view bytes) noexcept;
std::string to_hex(std::uint64_t value);

// nullopt when the file cannot be read.
std::optional<std::uint64_t> digest_file(const std::filesystem::path& path);

}  // namespace forge
