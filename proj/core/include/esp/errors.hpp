#ifndef ESP_ERRORS_HPP
#define ESP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace esp {

enum class Errc {
  invalid_input,
  numeric_domain,
  singular_matrix,
  support_boundary,
  unsupported_operation,
  no_root_found,
  empty_support,
  invalid_restriction,
  io_error,
};

/// All library failures are reported through this exception type; `code`
/// discriminates the failure class. `no_root_found` carries the best
/// residual reached before giving up in `detail_value`.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, double detail_value = 0.0)
      : std::runtime_error(what), code_(code), detail_value_(detail_value) {}

  Errc code() const noexcept { return code_; }
  double detail_value() const noexcept { return detail_value_; }

 private:
  Errc code_;
  double detail_value_;
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_input: return "invalid-input";
    case Errc::numeric_domain: return "numeric-domain";
    case Errc::singular_matrix: return "singular-matrix";
    case Errc::support_boundary: return "support-boundary";
    case Errc::unsupported_operation: return "unsupported-operation";
    case Errc::no_root_found: return "no-root-found";
    case Errc::empty_support: return "empty-support";
    case Errc::invalid_restriction: return "invalid-restriction";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace esp

#endif  // ESP_ERRORS_HPP
