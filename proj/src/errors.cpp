#include "refusal/errors.hpp"

namespace refusal {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Structure: return "StructureError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DanglingAnnotation: return "DanglingAnnotation";
    case ErrorKind::EmptyRatings: return "EmptyRatings";
    case ErrorKind::NoLabels: return "NoLabels";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::MissingVector: return "MissingVector";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::BadWeights: return "BadWeights";
    case ErrorKind::BadProjection: return "BadProjection";
    case ErrorKind::SeedNotFound: return "SeedNotFound";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ClassMissing: return "ClassMissing";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::NoLeaves: return "NoLeaves";
    case ErrorKind::UnknownKind: return "UnknownKind";
    case ErrorKind::MissingVariant: return "MissingVariant";
    case ErrorKind::InsufficientOutputs: return "InsufficientOutputs";
    case ErrorKind::MissingShot: return "MissingShot";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorKind::DegenerateMarginals: return "DegenerateMarginals";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::EmptyOthers: return "EmptyOthers";
    case ErrorKind::EmptyItem: return "EmptyItem";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::ZeroThroughput: return "ZeroThroughput";
    case ErrorKind::UnknownAnnotator: return "UnknownAnnotator";
    case ErrorKind::UnknownCampaign: return "UnknownCampaign";
    case ErrorKind::CampaignClosed: return "CampaignClosed";
    case ErrorKind::NotAssigned: return "NotAssigned";
    case ErrorKind::Provider: return "ProviderError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

bool is_environmental(ErrorKind kind) {
  return kind == ErrorKind::Provider || kind == ErrorKind::Io;
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace refusal
