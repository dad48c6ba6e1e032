#ifndef KAQA_ERROR_H_
#define KAQA_ERROR_H_

#include <stdexcept>
#include <string>

namespace kaqa {

// Base for every error the library reports to callers.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (KG files, datasets, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid arguments or configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Shape mismatch or misuse of the autodiff engine.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Training aborted (divergence, degenerate data).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace kaqa

#endif  // KAQA_ERROR_H_
