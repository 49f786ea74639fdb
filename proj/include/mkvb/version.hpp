#pragma once

namespace mkvb {

inline constexpr const char* kVersion = "0.1.0";
/// Version of the CSV column layouts written by the command-line tool.
inline constexpr int kCsvSchemaVersion = 1;

}  // namespace mkvb
