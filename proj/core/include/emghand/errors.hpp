#pragma once

#include <stdexcept>
#include <string>

namespace emghand {

/// Bad user-supplied data: unreadable files, malformed records, shape
/// mismatches at module boundaries. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant (non-finite values, impossible states).
/// Maps to CLI exit code 3.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace emghand
