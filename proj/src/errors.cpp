#include "shsmm/errors.hpp"

namespace shsmm {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidModePartition: return "InvalidModePartition";
    case Errc::OuterProductNotSupported: return "OuterProductNotSupported";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::UnknownMode: return "UnknownMode";
    case Errc::InvalidTolerance: return "InvalidTolerance";
    case Errc::RankZero: return "RankZero";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::InvalidModel: return "InvalidModel";
    case Errc::GenerationFailed: return "GenerationFailed";
    case Errc::OracleTooLarge: return "OracleTooLarge";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::DegenerateMoments: return "DegenerateMoments";
    case Errc::SequenceTooShort: return "SequenceTooShort";
    case Errc::UnknownSymbol: return "UnknownSymbol";
    case Errc::InvalidOffsets: return "InvalidOffsets";
    case Errc::MonotonicityViolation: return "MonotonicityViolation";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(errc_name(code)) + (detail.empty() ? "" : ": " + detail)),
      code_(code) {}

}  // namespace shsmm
