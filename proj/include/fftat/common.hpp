#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fftat {

// Raised on bad shapes, bad configs, malformed files.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when training hits non-finite values; maps to CLI exit code 2.
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void format_into(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <typename... Args>
void check(bool cond, const Args&... args) {
  if (!cond) throw Error(strcat(args...));
}

// FNV-1a; used for config hashes so run dirs are self-describing.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace fftat
