#ifndef ESP_NUM_FORMAT_HPP
#define ESP_NUM_FORMAT_HPP

#include <string>

namespace esp {

/// Locale-independent decimal formatting with `sig` significant digits
/// (std::to_chars under the hood). Infinities print as inf/-inf, NaN as nan.
std::string format_double(double value, int sig = 17);

}  // namespace esp

#endif  // ESP_NUM_FORMAT_HPP
