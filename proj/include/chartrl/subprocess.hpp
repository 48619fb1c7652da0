#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace chartrl {

struct ProcessResult {
  bool started = false;
  bool timed_out = false;
  int exit_code = -1;  // -1 when killed by a signal or not started
  std::string out;
  std::string err;
  std::chrono::milliseconds elapsed{0};
};

// Runs argv[0] (PATH lookup) with stdin closed. On timeout the whole process
// group is killed. Captured streams are truncated to `capture_limit` bytes.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout,
                          std::size_t capture_limit = 64 * 1024);

}  // namespace chartrl
