#pragma once

#include "forge/manifest.hpp"
#include "forge/resolver.hpp"
#include "forge/scanner.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace forge {

enum class TargetKind { object, archive, executable };

std::string_view to_string(TargetKind kind) noexcept;

// Which output subdirectory an executable lands in.
enum class ExecutableRole { app, test, example };

std::string_view to_string(ExecutableRole role) noexcept;

struct BuildTarget {
  // obj/<package>/<source path>, lib/<package>, exe/<role>/<name>
  std::string id;
  TargetKind kind = TargetKind::object;
  std::string package;
  // Object targets only.
  std::optional<SourceInfo> source;
  std::set<std::string> prerequisites;
  // Relative to the build output directory.
  std::string output_name;
  // Executables only; in link order.
  std::vector<std::string> link_libraries;
  // Executables only; the object built from the main program.
  std::string main_object;
  // Executables only; archives in link order (dependents before dependencies).
  std::vector<std::string> link_archives;
  ExecutableRole role = ExecutableRole::app;
  // Executable name as used by run/test/install.
  std::string name;

  bool operator==(const BuildTarget&) const = default;
};

struct ModelPackage {
  std::string name;
  Manifest manifest;
  std::filesystem::path source_dir;
  // Transitive dependencies, dependency order.
  std::vector<std::string> closure;

  bool operator==(const ModelPackage&) const = default;
};

struct PackageModel {
  std::string root;
  // Dependency order; root last.
  std::vector<ModelPackage> packages;
  std::map<std::string, BuildTarget> targets;
  std::map<std::string, std::string> module_index;
  std::set<std::string> external_modules;

  const ModelPackage& package(const std::string& name) const;
  std::vector<const BuildTarget*> executables(ExecutableRole role) const;

  bool operator==(const PackageModel&) const = default;
};

using SourcesByPackage = std::map<std::string, std::vector<SourceInfo>>;

// Scans the library tree of every package, plus the executable directories of
// the root. Sources keep paths relative to their package root.
SourcesByPackage collect_sources(const std::vector<ResolvedPackage>& packages);

// Throws ModelError on duplicate modules, unresolved modules and cycles.
PackageModel build_model(const Manifest& root_manifest, const std::vector<ResolvedPackage>& packages,
                         const SourcesByPackage& sources);

// Prerequisites first; ties broken by the smaller target id.
std::vector<std::string> topo_order(const PackageModel& model);

// Deterministic line-oriented dump, see README for the format.
std::string render_model(const PackageModel& model);

// `targets` plus every transitive prerequisite.
std::set<std::string> prerequisite_closure(const PackageModel& model, const std::set<std::string>& targets);

}  // namespace forge
