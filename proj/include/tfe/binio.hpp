#pragma once
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tfe/errors.hpp"

// Little-endian binary primitives shared by the tensor and flow-image file
// formats. Assumes a little-endian host.

namespace tfe::binio {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& os, float v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw FormatError(std::string("truncated file while reading ") + what);
  return v;
}

inline float read_f32(std::istream& is, const char* what) {
  float v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw FormatError(std::string("truncated file while reading ") + what);
  return v;
}

inline double read_f64(std::istream& is, const char* what) {
  double v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw FormatError(std::string("truncated file while reading ") + what);
  return v;
}

inline void write_magic(std::ostream& os, const char magic[4]) {
  os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw FormatError(std::string("bad magic bytes, not a ") + what + " file");
}

}  // namespace tfe::binio
