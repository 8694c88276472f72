#pragma once

#include <string_view>

namespace mtseg {

enum class TracerClass { FDG, PSMA };

std::string_view to_string(TracerClass t);
/// Accepts "FDG" / "PSMA" (case-insensitive); throws InvalidArgument otherwise.
TracerClass parse_tracer(std::string_view text);

}  // namespace mtseg
