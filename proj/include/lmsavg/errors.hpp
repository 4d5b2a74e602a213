#ifndef LMSAVG_ERRORS_HPP
#define LMSAVG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lmsavg {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Shapes that do not line up (d vs D, vector lengths).
class DimensionError : public Error {
  public:
    using Error::Error;
};

// Malformed input, invalid problem descriptions, violated preconditions on data.
class DataError : public Error {
  public:
    using Error::Error;
};

// Singular or indefinite operators, step-sizes outside the stable range.
class NumericalError : public Error {
  public:
    using Error::Error;
};

namespace detail {

inline void require_dim(bool ok, const std::string &what) {
    if (!ok) throw DimensionError(what);
}

} // namespace detail
} // namespace lmsavg

#endif // LMSAVG_ERRORS_HPP
