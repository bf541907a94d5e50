#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace refusal {

enum class ErrorKind {
  // input validation
  Parse,
  Structure,
  InvalidArgument,
  DanglingAnnotation,
  EmptyRatings,
  NoLabels,
  EmptySet,
  DimMismatch,
  MissingVector,
  ZeroVector,
  BadWeights,
  BadProjection,
  SeedNotFound,
  NonFiniteInput,
  LengthMismatch,
  ShapeMismatch,
  ClassMissing,
  Divergence,
  NoLeaves,
  UnknownKind,
  MissingVariant,
  InsufficientOutputs,
  MissingShot,
  UnknownCategory,
  UnparseableVerdict,
  DegenerateMarginals,
  DegenerateData,
  EmptyOthers,
  EmptyItem,
  IdMismatch,
  ZeroThroughput,
  UnknownAnnotator,
  UnknownCampaign,
  CampaignClosed,
  NotAssigned,
  // environment
  Provider,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// True for failures caused by the outside world (network, filesystem)
/// rather than by the data or arguments.
bool is_environmental(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace refusal
