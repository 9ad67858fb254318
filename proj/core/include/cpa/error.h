#ifndef CPA_ERROR_H_
#define CPA_ERROR_H_

#include <stdexcept>
#include <string>

namespace cpa {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, unreadable paths, bad arguments.
class IoError : public Error {
 public:
  using Error::Error;
};

// Numerical failures: divergence, degenerate systems, invalid statistics.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpa

#endif  // CPA_ERROR_H_
