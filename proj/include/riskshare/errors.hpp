#pragma once

#include <stdexcept>
#include <string>

namespace riskshare {

// Bad user input: malformed config, invalid parameters.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A mathematical precondition does not hold for the data at hand.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class SurjectivityError : public DomainError {
public:
    using DomainError::DomainError;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace riskshare
