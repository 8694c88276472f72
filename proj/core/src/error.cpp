#include "mtseg/error.hpp"

namespace mtseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::NonFiniteVoxels: return "NonFiniteVoxels";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NotCanonical: return "NotCanonical";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::AdapterLaunchFailure: return "AdapterLaunchFailure";
    case ErrorCode::AdapterProtocolError: return "AdapterProtocolError";
    case ErrorCode::AdapterTimeout: return "AdapterTimeout";
    case ErrorCode::InvalidSpacing: return "InvalidSpacing";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::UnmappedLabel: return "UnmappedLabel";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::EmptyVolume: return "EmptyVolume";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::EmptyReportList: return "EmptyReportList";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ManifestUnreadable: return "ManifestUnreadable";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace mtseg
