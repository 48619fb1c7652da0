#pragma once

#include <stdexcept>
#include <string>

namespace chartrl {

// Caller violated a precondition (bad argument, bad flag, bad config).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data was unreadable or malformed.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A remote client or an executor process failed.
class ExternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chartrl
