#pragma once

#include <string>
#include <vector>

namespace svae {

// Exit codes, one per error class.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,        // bad flags or invalid argument values
  kExitIo = 2,           // unreadable input / unwritable output
  kExitFormat = 3,       // bad magic, version or corrupt payload
  kExitMismatch = 4,     // checkpoint/bitstream/image dimension mismatches
  kExitEmptyData = 5,    // dataset directory holds no usable images
  kExitUndersized = 6,   // dataset image smaller than the crop
  kExitNumeric = 7,      // non-finite loss during training
  kExitInternal = 8,
};

// Runs the `svae` command line (args excludes argv[0]). Never throws.
int run_cli(const std::vector<std::string>& args);

}  // namespace svae
