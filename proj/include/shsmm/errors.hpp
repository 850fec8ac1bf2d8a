#pragma once

#include <stdexcept>
#include <string>

namespace shsmm {

enum class Errc {
  InvalidModePartition,
  OuterProductNotSupported,
  ShapeMismatch,
  UnknownMode,
  InvalidTolerance,
  RankZero,
  IndexOutOfRange,
  InvalidModel,
  GenerationFailed,
  OracleTooLarge,
  InsufficientData,
  DegenerateMoments,
  SequenceTooShort,
  UnknownSymbol,
  InvalidOffsets,
  MonotonicityViolation,
  ParseError,
  IoError,
  InvalidArgument,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace shsmm
