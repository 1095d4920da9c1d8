#pragma once

#include <stdexcept>
#include <string>

namespace z2higgs {

// Exit codes used by the CLI.
enum class ExitCode : int { ok = 0, config = 2, resource = 3, numeric = 4 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

// invalid shapes, out-of-box cells, dimension mismatches, precondition violations
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& w) : Error(w, ExitCode::config) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& w) : Error(w, ExitCode::config) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& w) : Error(w, ExitCode::config) {}
};

class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& w) : Error(w, ExitCode::resource) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& w) : Error(w, ExitCode::numeric) {}
};

}  // namespace z2higgs
