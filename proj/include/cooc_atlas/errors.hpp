#ifndef COOC_ATLAS_ERRORS_HPP
#define COOC_ATLAS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cooc_atlas {

// Bad input data: malformed files, unknown items, index misalignment.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure during training or evaluation (non-finite values,
// divergence, density underflow).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid arguments or configuration.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A well-formed request naming a domain, item or session that does not exist.
class NotFoundError : public UsageError {
public:
    using UsageError::UsageError;
};

}

#endif
