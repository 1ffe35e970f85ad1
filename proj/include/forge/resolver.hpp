#pragma once

#include "forge/manifest.hpp"
#include "forge/process.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace forge {

struct RootOrigin {
  bool operator==(const RootOrigin&) const = default;
};

using PackageOrigin = std::variant<RootOrigin, PathOrigin, GitOrigin>;

struct ResolvedPackage {
  std::string name;
  PackageOrigin origin;
  std::filesystem::path local_dir;
  Manifest manifest;
  // Commit checked out; set iff origin is git.
  std::optional<std::string> pinned_rev;
  // Direct dependency names as declared (dev-dependencies included for the root).
  std::vector<std::string> depends_on;

  bool is_root() const noexcept { return std::holds_alternative<RootOrigin>(origin); }
  bool operator==(const ResolvedPackage&) const = default;
};

// Seam over the host `git` executable so tests can observe or replace it.
class GitClient {
 public:
  virtual ~GitClient() = default;
  // Runs `git <args...>` in cwd.
  virtual ProcessResult run(const std::vector<std::string>& args, const std::filesystem::path& cwd);
  // Number of commands that contacted a remote (clone/fetch).
  int network_calls() const noexcept { return network_calls_; }

 protected:
  int network_calls_ = 0;
};

struct Checkout {
  std::filesystem::path local_dir;
  std::string pinned_rev;

  bool operator==(const Checkout&) const = default;
};

struct FetchOptions {
  bool offline = false;
  // Re-fetch branch and default-branch checkouts (the `update` command).
  bool refresh = false;
};

// <cache_dir>/<name>/<sanitized ref or HEAD>/, with a metadata file holding
// the url and pinned commit. Tag and rev checkouts are never refreshed.
Checkout fetch_git(const std::string& name, const GitOrigin& origin, const std::filesystem::path& cache_dir,
                   GitClient& git, const FetchOptions& options = {});

std::string sanitize_ref(const GitRef& ref);

struct ResolveOptions {
  bool offline = false;
  bool refresh = false;
  // Follow the root package's dev-dependencies.
  bool include_dev = true;
};

struct Resolution {
  // Every package precedes its dependents; the root is last.
  std::vector<ResolvedPackage> packages;
  std::vector<std::string> warnings;

  bool operator==(const Resolution&) const = default;
};

Resolution resolve(const Manifest& root_manifest, const std::filesystem::path& root_dir,
                   const std::filesystem::path& cache_dir, GitClient& git, const ResolveOptions& options = {});

struct UpdateReport {
  Resolution resolution;
  // One line per git dependency, or "nothing to update".
  std::vector<std::string> summary;
};

// Refreshes branch and default-branch dependencies; tag and rev pins stay put.
UpdateReport update(const Manifest& root_manifest, const std::filesystem::path& root_dir,
                    const std::filesystem::path& cache_dir, GitClient& git);

// FORGE_CACHE_DIR when set, else <project>/build/dependencies.
std::filesystem::path default_cache_dir(const std::filesystem::path& project_root, const char* env_override);

}  // namespace forge
