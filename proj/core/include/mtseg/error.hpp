#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtseg {

enum class ErrorCode {
  FileNotFound,
  MalformedHeader,
  NonFiniteVoxels,
  IoFailure,
  NotCanonical,
  NotNormalized,
  SingleClassTrainingSet,
  DimensionMismatch,
  AdapterLaunchFailure,
  AdapterProtocolError,
  AdapterTimeout,
  InvalidSpacing,
  InvalidArgument,
  GeometryMismatch,
  UnmappedLabel,
  UnknownLabel,
  EmptyVolume,
  ShapeMismatch,
  EmptyDataset,
  DivergenceDetected,
  EmptyReportList,
  ConfigInvalid,
  ManifestUnreadable,
  SpecInvalid,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mtseg
