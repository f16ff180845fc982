#ifndef JUMPY_IO_H_
#define JUMPY_IO_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace jumpy {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// Writes `bytes` to `path` through a sibling temporary file and a rename, so
// an interrupted write never leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_file(const std::filesystem::path& path);

}  // namespace jumpy

#endif  // JUMPY_IO_H_
