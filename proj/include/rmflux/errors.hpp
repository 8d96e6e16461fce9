#pragma once

#include <stdexcept>
#include <string>

namespace rmflux {

// Argument outside the mathematical domain of an operation (t outside [0,1], bad step size).
class DomainError : public std::domain_error {
   public:
    using std::domain_error::domain_error;
};

// Inconsistent configuration: grid sizes, schedule alignment, tokenizer layout.
class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Malformed user input: scenes, scenario pairs, JSON files.
class ValidationError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Stored data does not match its metadata (size, digest, magic).
class IntegrityError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class CacheIoError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace rmflux
