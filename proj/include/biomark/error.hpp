#pragma once

#include <stdexcept>
#include <string>

namespace biomark {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input does not satisfy a documented contract (schema, shape, level set...).
/// The CLI maps these to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed: rank deficiency, degenerate spectrum, etc.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace biomark
