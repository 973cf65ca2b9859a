#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "lqt/array.hpp"
#include "lqt/error.hpp"

// Binary array format shared by dataset and checkpoint files:
//   magic "LQT1" | u32 rank | u32 dims[rank] | f32 data (row-major)
// All integers and floats little-endian; payload is always 32-bit floats
// regardless of the working precision.

namespace lqt::io {

inline constexpr char kArrayMagic[4] = {'L', 'Q', 'T', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw IoError(std::string("truncated array file while reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

}  // namespace detail

template <class S>
void write_array(std::ostream& os, const Array<S>& a) {
  os.write(kArrayMagic, 4);
  detail::put_u32(os, static_cast<std::uint32_t>(a.rank()));
  for (std::size_t d : a.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
  if constexpr (std::endian::native == std::endian::little) {
    if constexpr (std::is_same_v<S, float>) {
      os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * 4));
      return;
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) detail::put_f32(os, static_cast<float>(a[i]));
}

template <class S>
Array<S> read_array(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kArrayMagic, 4) != 0) {
    throw IoError("corrupt array file: bad magic (expected LQT1)");
  }
  const std::uint32_t rank = detail::get_u32(is, "rank");
  if (rank > 8) throw IoError("corrupt array file: implausible rank " + std::to_string(rank));
  std::vector<std::size_t> shape(rank);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = detail::get_u32(is, "dims");
    numel *= shape[i];
  }
  std::vector<float> raw(numel);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(numel * 4));
  if (static_cast<std::size_t>(is.gcount()) != numel * 4) {
    throw IoError("truncated array file: expected " + std::to_string(numel) + " f32 values");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : raw) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
      std::memcpy(&f, &u, 4);
    }
  }
  return Array<S>::from(std::move(shape), std::vector<S>(raw.begin(), raw.end()));
}

template <class S>
void save_array(const std::filesystem::path& path, const Array<S>& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write_array(os, a);
  if (!os) throw IoError("write failed: " + path.string());
}

template <class S>
Array<S> load_array(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return read_array<S>(is);
}

}  // namespace lqt::io
