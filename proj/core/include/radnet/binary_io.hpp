#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace radnet::io {

/// Writes doubles as little-endian IEEE-754 regardless of host order.
void write_f64_le(const std::filesystem::path& path, std::span<const double> values);

/// Reads a little-endian float64 blob. Throws FormatError naming expected and
/// actual byte counts when the file size differs from 8*expected_count.
std::vector<double> read_f64_le(const std::filesystem::path& path, std::size_t expected_count);

}  // namespace radnet::io
