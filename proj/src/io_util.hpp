#pragma once

#include <array>
#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cbe/error.hpp"

namespace cbe::io {

template <typename T>
void put_le(std::string& out, T value) {
  const auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(bits.data()), bits.size());
  } else {
    for (auto it = bits.rbegin(); it != bits.rend(); ++it) out.push_back(static_cast<char>(*it));
  }
}

template <typename T>
T get_le(const char* p) {
  std::array<unsigned char, sizeof(T)> bits{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const std::size_t src = std::endian::native == std::endian::little ? i : sizeof(T) - 1 - i;
    bits[i] = static_cast<unsigned char>(p[src]);
  }
  return std::bit_cast<T>(bits);
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline void spill(const std::string& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cbe::io
