#pragma once

#include <stdexcept>
#include <string>

namespace v2p {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, invalid arguments, violated invariants
// of data coming from outside the process. CLI exit code 2.
struct InputError : Error {
  using Error::Error;
};

// Generation backend failures: transport errors, exhausted retries.
// CLI exit code 3.
struct BackendError : Error {
  using Error::Error;
};

// Incompatible artifacts, e.g. observation-layout version mismatch between
// a checkpoint and a dataset. CLI exit code 4.
struct CompatError : Error {
  using Error::Error;
};

// A caller broke an internal precondition. Indicates a bug, not bad input.
struct ContractError : Error {
  using Error::Error;
};

}  // namespace v2p
