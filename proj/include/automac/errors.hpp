#pragma once

#include <stdexcept>
#include <string>

namespace automac {

// Error taxonomy mapped onto CLI exit codes: config 2, data 3, contract 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

// Invariant violations on domain values (bad pixels, bad enums, bad sizes).
struct ValidationError : DataError {
  using DataError::DataError;
};

// Cross-artifact contract breaches, e.g. encoder fingerprint mismatch.
struct ContractError : Error {
  using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitContract = 4;

}  // namespace automac
