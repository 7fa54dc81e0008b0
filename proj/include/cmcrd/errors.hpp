#pragma once

#include <stdexcept>
#include <string>

namespace cmcrd {

// Error taxonomy. Each class maps to one failure family so callers (the CLI
// in particular) can decide between a usage exit and a runtime exit.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadError : Error {
  using Error::Error;
};
struct PairingError : Error {
  using Error::Error;
};
struct SchemaError : Error {
  using Error::Error;
};
struct ProtocolError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};
struct SamplingError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};

}  // namespace cmcrd
