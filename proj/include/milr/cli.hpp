#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace milr::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kValidation = 3,
  kIo = 4,
  kInternal = 5,
};

inline constexpr int kManifestSchemaVersion = 1;

/// Runs one command line (without the program name). Every command writes
/// its outputs atomically plus a run manifest at `<--out>.manifest.json`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace milr::cli
