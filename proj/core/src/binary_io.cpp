#include "radnet/binary_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "radnet/error.hpp"

namespace radnet::io {

namespace {

std::uint64_t to_little(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) {
    return bits;
  } else {
    return __builtin_bswap64(bits);
  }
}

}  // namespace

void write_f64_le(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  std::vector<std::uint64_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    raw[i] = to_little(std::bit_cast<std::uint64_t>(values[i]));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(std::uint64_t)));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

std::vector<double> read_f64_le(const std::filesystem::path& path, std::size_t expected_count) {
  std::error_code ec;
  const auto actual_bytes = std::filesystem::file_size(path, ec);
  if (ec) throw FormatError("cannot stat '" + path.string() + "': " + ec.message());
  const std::uintmax_t expected_bytes = expected_count * sizeof(double);
  if (actual_bytes != expected_bytes) {
    throw FormatError("'" + path.string() + "' holds " + std::to_string(actual_bytes) +
                      " bytes, expected " + std::to_string(expected_bytes));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<std::uint64_t> raw(expected_count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected_bytes));
  if (!in) throw FormatError("short read from '" + path.string() + "'");
  std::vector<double> values(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    values[i] = std::bit_cast<double>(to_little(raw[i]));
  }
  return values;
}

}  // namespace radnet::io
