#pragma once

#include <stdexcept>
#include <string>

namespace rlplace {

enum class Errc {
  Syntax,
  UnknownBlockType,
  DuplicateName,
  DanglingPin,
  NetWithoutSource,
  NetWithoutSink,
  DuplicatePin,
  UnknownBlock,
  InfeasibleParams,
  DimensionMismatch,
  UnknownTileType,
  NegativeCapacity,
  IllegalPosition,
  AlreadyPlaced,
  NotPlaced,
  UnplacedBlock,
  ShapeMismatch,
  NoLegalAction,
  SchemaMismatch,
  NonFiniteLoss,
  BadGranularity,
  Infeasible,
  BadConfig,
  Io,
};

const char* to_string(Errc code);

// Every recoverable failure in the library is reported through this type so
// callers (tests, the CLI) can branch on the code instead of the message.
class PlaceError : public std::runtime_error {
 public:
  PlaceError(Errc code, const std::string& what);
  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace rlplace
