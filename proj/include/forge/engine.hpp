#pragma once

#include "forge/model.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace forge {

using Environment = std::map<std::string, std::string>;

// Snapshot of the current process environment.
Environment process_environment();

inline constexpr std::string_view kMockCompiler = "MOCK";
inline constexpr std::string_view kDefaultCompiler = "gfortran";

enum class CompilerFamily { gfortran, intel, flang, nvidia, generic, mock };

std::string_view to_string(CompilerFamily family) noexcept;

struct CompilerProfile {
  // Names the output directory, e.g. "gfortran" or "mock".
  std::string compiler_id;
  CompilerFamily family = CompilerFamily::generic;
  std::string executable;
  std::string c_compiler;
  // Fortran flags per profile name ("debug", "release").
  std::map<std::string, std::vector<std::string>> profiles;
  std::map<std::string, std::vector<std::string>> c_profiles;
  // "{dir}" is replaced by the module output directory.
  std::vector<std::string> module_output_flag;
  std::string include_flag = "-I";
  std::vector<std::string> archiver{"ar", "rcs"};

  bool is_mock() const noexcept { return family == CompilerFamily::mock; }
};

// Precedence: cli_compiler, then FPM_COMPILER, then gfortran. Never touches
// the filesystem; a missing compiler is reported when a build needs it.
CompilerProfile detect_toolchain(const std::optional<std::string>& cli_compiler, const Environment& env);

// Splits a --flag string on blanks, honouring single and double quotes.
std::vector<std::string> split_flags(std::string_view text);

// Neither given: debug flags. Profile only: its flags. Extra only: exactly the
// extra flags. Both: profile flags followed by extra flags.
std::vector<std::string> effective_flags(const std::optional<std::string>& profile,
                                         const std::optional<std::string>& extra, const CompilerProfile& compiler);

// C flags follow the named profile (debug when none is named).
std::vector<std::string> effective_c_flags(const std::optional<std::string>& profile,
                                           const CompilerProfile& compiler);

// <project_root>/build/<compiler_id>_<digest of compiler identity and flags>
std::filesystem::path output_dir(const std::filesystem::path& project_root, const std::vector<std::string>& flags,
                                 const CompilerProfile& compiler);

struct BuildContext {
  std::filesystem::path project_root;
  std::filesystem::path output_dir;
  std::vector<std::string> flags;
  std::vector<std::string> c_flags;
};

// --- cache -----------------------------------------------------------------

struct CacheEntry {
  std::string source_digest;
  // Prerequisite set plus the contents of included files.
  std::string deps_digest;
  std::string command_digest;
  bool success = false;
  std::string output_digest;

  bool operator==(const CacheEntry&) const = default;
};

inline constexpr std::string_view kCacheFile = "build-cache.txt";

struct BuildCache {
  std::map<std::string, CacheEntry> entries;

  // Missing or corrupt files yield an empty cache.
  static BuildCache load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  bool operator==(const BuildCache&) const = default;
};

// --- planning --------------------------------------------------------------

struct ToolCommand {
  std::string target_id;
  TargetKind kind = TargetKind::object;
  std::vector<std::string> argv;
  // Absolute paths; outputs.front() is the primary artifact.
  std::vector<std::filesystem::path> outputs;
  std::vector<std::filesystem::path> inputs;
  // Module interface files a compile is expected to emit (absolute).
  std::vector<std::filesystem::path> module_files;
  bool uses_c_compiler = false;
};

struct BuildPlan {
  BuildContext context;
  // Targets considered, prerequisites first.
  std::vector<std::string> order;
  std::map<std::string, ToolCommand> commands;
  std::map<std::string, CacheEntry> fingerprints;
  std::map<std::string, std::set<std::string>> prerequisites;
  std::set<std::string> dirty;
};

ToolCommand make_command(const PackageModel& model, const BuildTarget& target, const BuildContext& context,
                         const CompilerProfile& compiler);

// A target is dirty when it has no cache entry, its source, includes,
// prerequisite set or command line changed, its last build failed, its
// output is missing, or any prerequisite is dirty. `only` restricts the plan
// to the given targets and their prerequisites.
BuildPlan plan_rebuild(const PackageModel& model, const std::vector<std::string>& order, const BuildCache& cache,
                       const BuildContext& context, const CompilerProfile& compiler,
                       const std::set<std::string>* only = nullptr);

// --- execution -------------------------------------------------------------

struct ToolResult {
  int exit_code = 0;
  std::string output;
};

// Runs one command. Implementations must be safe to call concurrently.
class Toolchain {
 public:
  virtual ~Toolchain() = default;
  virtual ToolResult invoke(const ToolCommand& command) = 0;
  // Throws BuildError if the tools a plan needs are unavailable.
  virtual void check_available(const BuildPlan& plan) const = 0;
};

// Spawns the real compiler, archiver and linker from the project root.
class ProcessToolchain : public Toolchain {
 public:
  ProcessToolchain(CompilerProfile compiler, std::filesystem::path working_dir);
  ToolResult invoke(const ToolCommand& command) override;
  void check_available(const BuildPlan& plan) const override;

 private:
  CompilerProfile compiler_;
  std::filesystem::path working_dir_;
};

// Writes deterministic placeholder outputs and logs every invocation as
//   start <ns> <target>
//   finish <ns> <target> ok|failed
// Targets whose id or source path is listed in `failures` fail.
class MockToolchain : public Toolchain {
 public:
  MockToolchain(std::filesystem::path log_file, std::set<std::string> failures = {});
  ToolResult invoke(const ToolCommand& command) override;
  void check_available(const BuildPlan&) const override {}

  const std::filesystem::path& log_file() const noexcept { return log_file_; }

 private:
  void log(std::string_view event, const std::string& target, std::string_view status = {});

  std::filesystem::path log_file_;
  std::set<std::string> failures_;
  std::mutex mutex_;
};

struct BuildReport {
  std::vector<std::string> built;
  std::vector<std::string> failed;
  std::vector<std::string> skipped;
  std::map<std::string, std::string> diagnostics;
  int invocations = 0;

  bool up_to_date() const noexcept { return invocations == 0 && failed.empty() && skipped.empty(); }
  bool ok() const noexcept { return failed.empty() && skipped.empty(); }
};

// Runs every dirty target once its prerequisites succeeded, with up to
// `workers` tools in flight. Dependents of a failure are skipped; independent
// work continues. Updates `cache` for every target that ran.
BuildReport execute(const BuildPlan& plan, int workers, Toolchain& toolchain, BuildCache& cache);

struct BuildRequest {
  const PackageModel* model = nullptr;
  BuildContext context;
  CompilerProfile compiler;
  int workers = 1;
  // Restrict to these targets and their prerequisites.
  std::optional<std::set<std::string>> only;
};

// Locks the output directory, plans against the stored cache, executes and
// saves the cache (pruned to targets in the model).
BuildReport run_build(const BuildRequest& request, Toolchain& toolchain);

}  // namespace forge
