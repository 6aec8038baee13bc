#pragma once

#include <stdexcept>
#include <string>

namespace saca {

// Shape or axis disagreement between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument values: bad labels, bad config fields, misuse of a tape.
class ValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File or stream level failure: missing file, bad header, truncated payload.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace saca
