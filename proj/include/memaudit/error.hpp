#pragma once

#include <stdexcept>
#include <string>

namespace memaudit {

// Bad arguments or shapes passed to a kernel (dimension mismatch, empty
// window, parameters outside their domain).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unreadable, undecodable, or malformed input files and documents. The CLI
// maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace memaudit
