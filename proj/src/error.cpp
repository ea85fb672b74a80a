#include "rlplace/error.hpp"

namespace rlplace {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::Syntax: return "syntax";
    case Errc::UnknownBlockType: return "unknown_block_type";
    case Errc::DuplicateName: return "duplicate_name";
    case Errc::DanglingPin: return "dangling_pin";
    case Errc::NetWithoutSource: return "net_without_source";
    case Errc::NetWithoutSink: return "net_without_sink";
    case Errc::DuplicatePin: return "duplicate_pin";
    case Errc::UnknownBlock: return "unknown_block";
    case Errc::InfeasibleParams: return "infeasible_params";
    case Errc::DimensionMismatch: return "dimension_mismatch";
    case Errc::UnknownTileType: return "unknown_tile_type";
    case Errc::NegativeCapacity: return "negative_capacity";
    case Errc::IllegalPosition: return "illegal_position";
    case Errc::AlreadyPlaced: return "already_placed";
    case Errc::NotPlaced: return "not_placed";
    case Errc::UnplacedBlock: return "unplaced_block";
    case Errc::ShapeMismatch: return "shape_mismatch";
    case Errc::NoLegalAction: return "no_legal_action";
    case Errc::SchemaMismatch: return "schema_mismatch";
    case Errc::NonFiniteLoss: return "non_finite_loss";
    case Errc::BadGranularity: return "bad_granularity";
    case Errc::Infeasible: return "infeasible";
    case Errc::BadConfig: return "bad_config";
    case Errc::Io: return "io";
  }
  return "unknown";
}

PlaceError::PlaceError(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

}  // namespace rlplace
