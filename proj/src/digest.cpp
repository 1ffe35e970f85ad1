#include "forge/digest.hpp"

#include <fmt/format.h>

#include <array>
#include <fstream>

namespace forge {

Hasher& Hasher::update(std::string_view bytes) noexcept {
  for (const char c : bytes) {
    state_ ^= static_cast<unsigned char>(c);
    state_ *= 1099511628211ull;
  }
  return *this;
}

Hasher& Hasher::field(std::string_view bytes) noexcept {
  std::uint64_t n = bytes.size();
  std::array<char, 8> len{};
  for (auto& b : len) {
    b = static_cast<char>(n & 0xff);
    n >>= 8;
  }
  update({len.data(), len.size()});
  return update(bytes);
}

std::string Hasher::hex() const { return to_hex(state_); }

std::uint64_t digest_bytes(std::string_view bytes) noexcept { return Hasher{}.update(bytes).value(); }

std::string to_hex(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::optional<std::uint64_t> digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  Hasher h;
  std::array<char, 1 << 14> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update({buf.data(), static_cast<std::size_t>(in.gcount())});
  }
  if (in.bad()) return std::nullopt;
  return h.value();
}

}  // namespace forge
