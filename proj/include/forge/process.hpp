#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace forge {

struct ProcessResult {
  int exit_code = 0;
  // stdout and stderr, interleaved.
  std::string output;

  bool ok() const noexcept { return exit_code == 0; }
};

using EnvOverrides = std::map<std::string, std::string>;

// Runs argv[0] (searched on PATH) in cwd and captures its combined output.
// A program that cannot be started yields exit code 127 and a message.
ProcessResult run_capture(const std::vector<std::string>& argv,
                          const std::filesystem::path& cwd,
                          const EnvOverrides& env = {});

// Like run_capture, but forwards output to sink as it arrives. stdin is
// inherited. Returns the exit code (128 + signal for signalled children).
int run_streaming(const std::vector<std::string>& argv,
                  const std::filesystem::path& cwd, std::ostream& sink);

// Resolves a program name against PATH; empty if not found.
std::filesystem::path find_program(const std::string& name);

// Exclusive advisory lock on a file, released on destruction.
class FileLock {
 public:
  // blocking=false throws BuildError if another process holds the lock.
  FileLock(const std::filesystem::path& path, bool blocking);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace forge
