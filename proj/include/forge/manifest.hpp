#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace forge {

inline constexpr std::string_view kManifestFile = "fpm.toml";

struct ExecutableSpec {
  std::string name;
  std::string source_dir;
  std::string main = "main.f90";

  bool operator==(const ExecutableSpec&) const = default;
};

enum class RefKind { none, tag, branch, rev };

std::string_view to_string(RefKind kind) noexcept;

struct GitRef {
  RefKind kind = RefKind::none;
  std::string value;

  bool operator==(const GitRef&) const = default;
};

struct GitOrigin {
  std::string url;
  GitRef ref;

  bool operator==(const GitOrigin&) const = default;
};

struct PathOrigin {
  std::string path;

  bool operator==(const PathOrigin&) const = default;
};

struct DependencySpec {
  std::string name;
  std::variant<GitOrigin, PathOrigin> origin;

  bool is_git() const noexcept { return std::holds_alternative<GitOrigin>(origin); }
  const GitOrigin* git() const noexcept { return std::get_if<GitOrigin>(&origin); }
  const PathOrigin* path() const noexcept { return std::get_if<PathOrigin>(&origin); }

  // "git <url> tag v1" / "path ../x", for diagnostics.
  std::string describe() const;

  bool operator==(const DependencySpec&) const = default;
};

struct LibrarySpec {
  std::string source_dir = "src";

  bool operator==(const LibrarySpec&) const = default;
};

struct BuildSettings {
  std::vector<std::string> link;
  std::vector<std::string> external_modules;
  bool auto_executables = true;
  bool auto_tests = true;
  bool auto_examples = true;

  bool operator==(const BuildSettings&) const = default;
};

struct Manifest {
  std::string name;
  std::string version = "0.1.0";
  LibrarySpec library;
  std::vector<ExecutableSpec> executables;
  std::vector<ExecutableSpec> tests;
  std::vector<ExecutableSpec> examples;
  std::map<std::string, DependencySpec> dependencies;
  std::map<std::string, DependencySpec> dev_dependencies;
  BuildSettings build;

  bool operator==(const Manifest&) const = default;
};

// Parses fpm.toml contents. base_dir only labels diagnostics. Unknown keys are
// appended to warnings; everything else that is wrong throws ManifestError.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        std::vector<std::string>& warnings);
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});

// Reads <dir>/fpm.toml.
Manifest load_manifest(const std::filesystem::path& dir, std::vector<std::string>& warnings);

// The fpm.toml text written by `new`.
std::string manifest_template(std::string_view name);
Manifest default_manifest(std::string_view name);

// Fully-defaulted TOML; parse_manifest(render_manifest(m)) == m.
std::string render_manifest(const Manifest& m);

bool is_valid_package_name(std::string_view name) noexcept;

// Throws ManifestError on the first violated invariant.
void validate(const Manifest& m);

}  // namespace forge
