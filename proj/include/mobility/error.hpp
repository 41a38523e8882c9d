#ifndef MOBILITY_ERROR_HPP
#define MOBILITY_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mobility {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (parse failures, schema violations).
class DataError : public Error {
public:
    using Error::Error;
};

/// A regression or index whose regressor carries no variation.
class DegenerateError : public Error {
public:
    using Error::Error;
};

} // namespace mobility

#endif // MOBILITY_ERROR_HPP
