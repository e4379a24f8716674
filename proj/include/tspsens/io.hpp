#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tspsens::io {

/// 64-bit FNV-1a over raw bytes, rendered as 16 lowercase hex digits.
std::string checksum_bytes(std::string_view bytes);

/// Checksum of a file's exact contents. Throws IoError if unreadable.
std::string checksum_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Non-empty lines of a text file (trailing '\r' stripped).
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace tspsens::io
