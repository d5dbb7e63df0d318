#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pilf {

/// Error raised by any pipeline stage. `stage` names the module or CLI step,
/// `context` carries a short machine-readable locator (line number, column,
/// epoch, ...). The CLI serializes these three fields as its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& message, std::string context = {})
      : std::runtime_error(message), stage_(std::move(stage)), context_(std::move(context)) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& context() const noexcept { return context_; }

 private:
  std::string stage_;
  std::string context_;
};

inline void require(bool ok, const char* stage, const std::string& message,
                    const std::string& context = {}) {
  if (!ok) throw Error(stage, message, context);
}

}  // namespace pilf
