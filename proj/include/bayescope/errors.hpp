#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bayescope {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid user configuration (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Numeric-domain violation: log/div outside domain, non-finite values.
// Training treats this as a diverged run (CLI exit code 3).
struct NumericError : Error {
    using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar node.
struct ContractError : Error {
    using Error::Error;
};

// Filesystem / serialization failure (CLI exit code 4).
struct IoError : Error {
    using Error::Error;
};

// Raised by the training loop when a loss becomes non-finite.
struct DivergedError : NumericError {
    DivergedError(std::size_t epoch, std::size_t batch, const std::string& what_part)
        : NumericError("diverged at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch) + ": " + what_part),
          epoch(epoch),
          batch(batch) {}
    std::size_t epoch;
    std::size_t batch;
};

}  // namespace bayescope
