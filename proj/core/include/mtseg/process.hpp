#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace mtseg {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string stdout_text;
};

/// Runs `command` through /bin/sh with the given arguments appended (each
/// single-quoted) and captures standard output. The child runs in its own
/// process group, which is killed when the deadline passes.
///
/// Throws AdapterLaunchFailure when the shell cannot be spawned.
ProcessResult run_command(const std::string& command, const std::vector<std::string>& args,
                          std::chrono::milliseconds timeout);

std::string shell_quote(const std::string& arg);

}  // namespace mtseg
