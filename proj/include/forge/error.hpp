#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace forge {

// Base for every diagnostic the tool reports to the user.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed TOML (line > 0) or a schema violation (key_path names the key).
class ManifestError : public Error {
 public:
  ManifestError(std::string message, std::string key_path, int line = 0)
      : Error(std::move(message)), key_path_(std::move(key_path)), line_(line) {}

  const std::string& key_path() const noexcept { return key_path_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_path_;
  int line_;
};

class ScanError : public Error {
 public:
  explicit ScanError(std::vector<std::string> diagnostics);

  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class ResolveError : public Error {
 public:
  using Error::Error;
};

// Toolchain missing, or a build could not be carried out.
class BuildError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
