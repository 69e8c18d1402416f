#pragma once

#include <stdexcept>
#include <string>

namespace ibnet {

/// Input violates a documented precondition or invariant.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem or serialization failure.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ibnet
