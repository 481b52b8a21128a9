#pragma once

#include <stdexcept>
#include <string>

namespace ceb {

// Base for every failure raised by the library. Subclasses name the category
// so callers (the CLI in particular) can map them onto exit codes.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class format_error : public error {
 public:
  using error::error;
};

class range_error : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

class precondition_error : public error {
 public:
  using error::error;
};

class structural_error : public error {
 public:
  using error::error;
};

// Raised when an exponential search (candidate enumeration, branch-and-bound)
// would exceed its configured budget.
class capacity_error : public error {
 public:
  using error::error;
};

}  // namespace ceb
