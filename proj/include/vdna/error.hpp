#pragma once

#include <stdexcept>
#include <string>

namespace vdna {

// Every failure raised by the library derives from Error and carries a short
// class name that the CLI prints as the machine-parsable error class.
class Error : public std::runtime_error {
 public:
  Error(std::string error_class, const std::string& what)
      : std::runtime_error(what), class_(std::move(error_class)) {}

  const std::string& error_class() const noexcept { return class_; }

 private:
  std::string class_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("IoError", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("FormatError", what) {}
};

class IncompatibleError : public Error {
 public:
  explicit IncompatibleError(const std::string& what)
      : Error("IncompatibleError", what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what)
      : Error("ArgumentError", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error("NumericError", what) {}
};

}  // namespace vdna
