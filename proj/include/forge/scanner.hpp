#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

enum class UnitKind {
  fortran_module,
  fortran_submodule,
  fortran_program,
  fortran_subprogram,
  c_source,
  c_header,
};

std::string_view to_string(UnitKind kind) noexcept;

inline bool is_fortran(UnitKind kind) noexcept {
  return kind != UnitKind::c_source && kind != UnitKind::c_header;
}

struct SourceInfo {
  // Relative to the package root, '/' separated.
  std::string path;
  std::uint64_t digest = 0;
  UnitKind unit_kind = UnitKind::fortran_subprogram;
  std::set<std::string> provides;
  std::set<std::string> uses;
  // Root ancestor module of a submodule.
  std::set<std::string> parents;
  // For `submodule (a:b) c`, the intermediate parent submodule `b`.
  std::optional<std::string> parent_submodule;
  // Relative to the package root; transitive for Fortran includes.
  std::set<std::string> includes;

  bool operator==(const SourceInfo&) const = default;
};

// A logical free-form statement. Character literal contents are replaced by
// NUL bytes in `text` and kept verbatim in `literals`.
struct Statement {
  std::string text;
  std::vector<std::string> literals;
  int line = 0;
};

// Comment stripping, continuation joining, ';' splitting and literal masking.
// Throws ScanError on an unterminated character literal.
std::vector<Statement> split_statements(std::string_view text);
std::vector<std::string> normalize_source(std::string_view text);

inline constexpr std::string_view kIntrinsicModules[] = {
    "iso_fortran_env", "iso_c_binding", "ieee_arithmetic", "ieee_exceptions", "ieee_features",
};

// path is relative to the package root; it locates includes and picks the
// accepted extensions (.f90, case-insensitive).
SourceInfo scan_fortran(std::string_view path, std::string_view text);
SourceInfo scan_c(std::string_view path, std::string_view text);

enum class SourceType { fortran, c, fixed_form, other };
SourceType classify_extension(const std::filesystem::path& path);

// Scans one file on disk. `rel` is its path relative to `package_root`.
// Fortran includes found under package_root are scanned transitively.
SourceInfo scan_file(const std::filesystem::path& package_root, const std::string& rel);

// Every recognized source under dir (recursively if requested), sorted by
// path. Paths are reported relative to package_root (dir itself when empty).
// Per-file failures are collected into a single ScanError.
std::vector<SourceInfo> scan_tree(const std::filesystem::path& dir, bool recurse,
                                  const std::filesystem::path& package_root = {});

}  // namespace forge
