#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "v2p/common.hpp"

namespace v2p {

// Shortest decimal text that round-trips the exact double. Shared by the DSL
// printer, URDF emission and JSON-adjacent text so artifacts are byte-stable.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// --- little-endian primitive I/O -------------------------------------------
// All binary artifacts are little-endian. The host is assumed little-endian
// (checked once at startup of the writers below).

namespace detail {
inline void require_little_endian() {
  const uint32_t probe = 1u;
  uint8_t first;
  std::memcpy(&first, &probe, 1);
  if (first != 1) throw ContractError("big-endian hosts are not supported");
}
}  // namespace detail

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError("unexpected end of binary stream");
  return v;
}

// --- shape-prefixed arrays ---------------------------------------------------
// Layout: u8 dtype, u8 ndim, u32 dims[ndim], payload.
enum class Dtype : uint8_t { F32 = 1, F64 = 2, I32 = 3, U8 = 4 };

template <typename T>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<float>() { return Dtype::F32; }
template <>
constexpr Dtype dtype_of<double>() { return Dtype::F64; }
template <>
constexpr Dtype dtype_of<int32_t>() { return Dtype::I32; }
template <>
constexpr Dtype dtype_of<uint8_t>() { return Dtype::U8; }

template <typename T>
void write_array(std::ostream& os, const std::vector<uint32_t>& dims, const T* data) {
  detail::require_little_endian();
  write_pod<uint8_t>(os, static_cast<uint8_t>(dtype_of<T>()));
  write_pod<uint8_t>(os, static_cast<uint8_t>(dims.size()));
  size_t n = 1;
  for (uint32_t d : dims) {
    write_pod<uint32_t>(os, d);
    n *= d;
  }
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
std::vector<T> read_array(std::istream& is, std::vector<uint32_t>& dims_out) {
  detail::require_little_endian();
  auto dt = read_pod<uint8_t>(is);
  if (dt != static_cast<uint8_t>(dtype_of<T>()))
    throw InputError("binary array dtype mismatch");
  auto ndim = read_pod<uint8_t>(is);
  dims_out.clear();
  size_t n = 1;
  for (int i = 0; i < ndim; ++i) {
    dims_out.push_back(read_pod<uint32_t>(is));
    n *= dims_out.back();
  }
  std::vector<T> data(n);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw InputError("unexpected end of binary array");
  return data;
}

inline std::ofstream open_out(const std::filesystem::path& p, bool binary = true) {
  std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
  if (!os) throw InputError("cannot open for writing: " + p.string());
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p, bool binary = true) {
  std::ifstream is(p, binary ? std::ios::binary : std::ios::in);
  if (!is) throw InputError("cannot open: " + p.string());
  return is;
}

inline std::string read_text_file(const std::filesystem::path& p) {
  auto is = open_in(p, false);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  auto os = open_out(p, false);
  os << text;
}

}  // namespace v2p
