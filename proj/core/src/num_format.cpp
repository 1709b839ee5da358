#include "esp/num_format.hpp"

#include <charconv>
#include <cmath>

namespace esp {

std::string format_double(double value, int sig) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value,
                                 std::chars_format::general, sig);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace esp
