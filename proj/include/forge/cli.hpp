#pragma once

#include "forge/engine.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Subcommand { none, new_package, build, run, test, update, install, list, help, version };

std::string_view to_string(Subcommand sub) noexcept;

// Every subcommand parse_args accepts, in the order the usage text lists them.
const std::vector<Subcommand>& all_subcommands();

struct Invocation {
  Subcommand subcommand = Subcommand::none;
  std::optional<std::string> profile;
  std::optional<std::string> flag;
  std::optional<std::string> compiler;
  std::optional<std::string> prefix;
  bool list = false;
  bool show_model = false;
  bool example = false;
  // `SUBCOMMAND --help`; `help TOPIC` sets subcommand=help and help_topic.
  bool help = false;
  bool version = false;
  std::string help_topic;
  // Package name for `new`, target names for run/test.
  std::vector<std::string> names;
  // Arguments after `--`, handed to the programs started by run/test.
  std::vector<std::string> passthrough;
};

// argv without the program name. Throws UsageError.
Invocation parse_args(const std::vector<std::string>& argv);

std::string usage_text();
std::string subcommand_list();
std::string subcommand_help(Subcommand sub);
std::string version_text();

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitBuildFailure = 1;
inline constexpr int kExitUsage = 2;

struct CliContext {
  std::filesystem::path cwd;
  Environment env;
  std::ostream& out;
  std::ostream& err;
  // Parallel tool invocations; 0 picks the hardware concurrency.
  int workers = 0;
};

// Parses and dispatches; never throws.
int run_cli(const std::vector<std::string>& args, CliContext& ctx);

// Creates <parent>/<name> with a buildable sample package. Throws UsageError
// if the directory exists, ManifestError for an invalid name.
std::filesystem::path create_package(const std::string& name, const std::filesystem::path& parent);

// Nearest directory at or above `start` holding fpm.toml.
std::optional<std::filesystem::path> find_project_root(const std::filesystem::path& start);

}  // namespace forge
