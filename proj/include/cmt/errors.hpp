#pragma once

#include <stdexcept>
#include <string>

namespace cmt {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A scalar/extent argument outside the operation's domain.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Caller broke a usage contract (e.g. backward from a non-scalar root).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Wavelet pyramid with inconsistent subbands.
class StructureError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Inputs for which a metric is undefined (zero band mean in ERGAS, ...).
class DegenerateInputError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// On-disk data disagrees with its manifest.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dataset used under the wrong evaluation protocol (e.g. training without GT).
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cmt
