#pragma once

#include <stdexcept>
#include <string>

namespace flsem {

// Exit codes used by the command line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitNumerical = 3,
  kExitGuard = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int code) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what, kExitValidation) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, kExitNumerical) {}
};

class GuardExceeded : public Error {
 public:
  explicit GuardExceeded(const std::string& what) : Error(what, kExitGuard) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace flsem
