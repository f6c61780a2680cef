#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "lattice_core.hpp"

// Flat binary layout: three little-endian uint64 (d, n, seed), then (n-1)^d
// little-endian float64 in lexicographic interior order.
namespace lattice_spde::io {

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("read_field_binary: truncated file");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace detail

struct FieldFile {
  GridSpec grid{1, 2};
  std::uint64_t seed = 0;
  std::vector<double> values;
};

inline void write_field_binary(const std::filesystem::path& path, const GridSpec& grid, std::uint64_t seed,
                               std::span<const double> values) {
  if (values.size() != grid.interior_size()) throw ConfigError("write_field_binary: size does not match grid");
  auto out = detail::open_out(path, std::ios::out | std::ios::binary);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(grid.d()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(grid.n()));
  detail::put_le<std::uint64_t>(out, seed);
  for (double v : values) detail::put_le<double>(out, v);
  if (!out) throw IoError("write failed: " + path.string());
}

inline FieldFile read_field_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto d = detail::get_le<std::uint64_t>(in);
  const auto n = detail::get_le<std::uint64_t>(in);
  FieldFile f;
  f.seed = detail::get_le<std::uint64_t>(in);
  if (d < 1 || d > 16 || n < 2 || n > (1u << 20)) throw IoError("read_field_binary: implausible header");
  f.grid = GridSpec(static_cast<int>(d), static_cast<int>(n));
  f.values.resize(f.grid.interior_size());
  for (double& v : f.values) v = detail::get_le<double>(in);
  return f;
}

/// CSV with columns i1..id,value; indices are interior lattice indices.
inline void write_field_csv(const std::filesystem::path& path, const GridSpec& grid, std::span<const double> values) {
  auto out = detail::open_out(path);
  for (int k = 1; k <= grid.d(); ++k) out << 'i' << k << ',';
  out << "value\n";
  out << std::setprecision(17);
  for (std::size_t lin = 0; lin < values.size(); ++lin) {
    for (int c : grid.unravel(lin)) out << c << ',';
    out << values[lin] << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = detail::open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lattice_spde::io
