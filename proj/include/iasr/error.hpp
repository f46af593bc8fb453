#pragma once

#include <stdexcept>
#include <string>

namespace iasr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace iasr
