#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "nac/sparse.hpp"

namespace nac {

// FNV-1a, 64 bit. Used for fixed-weight fingerprints and dataset checksums.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001b3ULL;
    }
  }

  void update(const Matrix& m) {
    const Index dims[2] = {m.rows(), m.cols()};
    update(std::as_bytes(std::span<const Index>(dims)));
    update(std::as_bytes(std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))));
  }

  void update(double v) { update(std::as_bytes(std::span<const double>(&v, 1))); }

  void update(const std::string& s) { update(std::as_bytes(std::span<const char>(s.data(), s.size()))); }

  std::uint64_t digest() const { return state_; }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Fnv1a h;
  h.update(std::as_bytes(std::span<const char>(bytes.data(), bytes.size())));
  return h.hex();
}

}  // namespace nac
