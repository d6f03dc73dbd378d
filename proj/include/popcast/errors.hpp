#pragma once

#include <stdexcept>
#include <string>

namespace popcast {

/// Base class for all popcast failures.
class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid grid/model/scenario configuration (bad invariants, unknown keys, CFL violations).
class config_error : public error {
  public:
    using error::error;
};

/// Numerical evaluation failure (division by zero, log of nonpositive, non-finite loss).
class eval_error : public error {
  public:
    using error::error;
};

/// Malformed or contract-violating input data (negative densities, bad CSV).
class data_error : public error {
  public:
    using error::error;
};

} // namespace popcast
