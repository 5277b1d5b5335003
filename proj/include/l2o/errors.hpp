#ifndef L2O_ERRORS_HPP
#define L2O_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace l2o {

// Base class for every error thrown by this library. Anything escaping a
// public entry point that is not an l2o::error is a bug.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes incompatible with the requested operation.
struct dim_error : error {
  using error::error;
};

// A precondition of an operation was violated by the caller.
struct contract_error : error {
  using error::error;
};

// An index (e.g. a class label) is out of range.
struct index_error : error {
  using error::error;
};

// An iterative numerical method failed to converge.
struct numeric_error : error {
  numeric_error(const std::string& what, double residual)
      : error(what), residual(residual) {}
  double residual;
};

// Malformed input data (IDX/CIFAR/CSV parsing).
struct parse_error : error {
  enum class kind { bad_magic, truncated, count_mismatch, label_range, bad_value };
  parse_error(kind k, const std::string& what, size_t offset = 0)
      : error(what), which(k), offset(offset) {}
  kind which;
  size_t offset;
};

// Filesystem-level failure (missing file, short read, ...).
struct io_error : error {
  using error::error;
};

}  // namespace l2o

#endif  // L2O_ERRORS_HPP
