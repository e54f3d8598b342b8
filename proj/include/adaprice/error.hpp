#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adaprice {

enum class ErrorKind {
  invalid_argument,
  dimension,
  numerical,
  config,
  unsupported,
  infeasible,
  schema,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::config: return "config";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::schema: return "schema";
  }
  return "unknown";
}

/// Every failure raised by the engine. `where()` names the offending item
/// (a user index, a scenario key path, ...) when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string where, const std::string& message)
      : std::runtime_error(compose(kind, where, message)),
        kind_(kind),
        where_(std::move(where)),
        message_(message) {}

  Error(ErrorKind kind, const std::string& message) : Error(kind, {}, message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }
  const std::string& message() const noexcept { return message_; }

 private:
  static std::string compose(ErrorKind kind, const std::string& where, const std::string& message) {
    std::string out(to_string(kind));
    out += " error";
    if (!where.empty()) out += " at " + where;
    out += ": " + message;
    return out;
  }

  ErrorKind kind_;
  std::string where_;
  std::string message_;
};

}  // namespace adaprice
