#pragma once

#include <cstdio>
#include <string>

namespace embr {

// Formats a double with 17 significant digits, enough to round-trip the exact
// binary value. Log files written with this are reproducible byte-for-byte
// whenever the underlying doubles are.
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace embr
