#ifndef UNDEM_ERROR_HPP
#define UNDEM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace undem {

// Exception categories map onto the CLI exit codes (1 usage, 2 data, 3 training).

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace undem

#endif  // UNDEM_ERROR_HPP
