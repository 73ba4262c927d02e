#pragma once

#include <stdexcept>
#include <string>

namespace uareg {

// Runtime failure (bad data, I/O, numeric blow-up). Maps to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller mistake (bad flag, bad key, missing path). Maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace uareg
