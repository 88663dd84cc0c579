#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace relens {

/// Shortest round-trip decimal form of a double (std::to_chars). NaN prints
/// as "nan". Used for every CSV field so output bytes are reproducible.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace relens
