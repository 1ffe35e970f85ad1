#include "forge/cli.hpp"

#include "forge/error.hpp"
#include "forge/manifest.hpp"
#include "forge/model.hpp"
#include "forge/process.hpp"
#include "forge/resolver.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <iostream>
#include <thread>

namespace forge {

namespace fs = std::filesystem;

std::string_view to_string(Subcommand sub) noexcept {
  switch (sub) {
    case Subcommand::none: return "";
    case Subcommand::new_package: return "new";
    case Subcommand::build: return "build";
    case Subcommand::run: return "run";
    case Subcommand::test: return "test";
    case Subcommand::update: return "update";
    case Subcommand::install: return "install";
    case Subcommand::list: return "list";
    case Subcommand::help: return "help";
    case Subcommand::version: return "version";
  }
  return "";
}

const std::vector<Subcommand>& all_subcommands() {
  static const std::vector<Subcommand> subs{Subcommand::build,  Subcommand::help,    Subcommand::list,
                                            Subcommand::new_package, Subcommand::run, Subcommand::test,
                                            Subcommand::update, Subcommand::install, Subcommand::version};
  return subs;
}

namespace {

std::string_view summary(Subcommand sub) {
  switch (sub) {
    case Subcommand::build: return "Compile the package placing results in the \"build\" directory";
    case Subcommand::help: return "Display help";
    case Subcommand::list: return "Display this list of subcommand descriptions";
    case Subcommand::new_package: return "Create a new Fortran package directory with sample files";
    case Subcommand::run: return "Run the local package application programs";
    case Subcommand::test: return "Run the test programs";
    case Subcommand::update: return "Update and manage project dependencies";
    case Subcommand::install: return "Install project";
    case Subcommand::version: return "Print version information";
    case Subcommand::none: break;
  }
  return "";
}

constexpr std::string_view kBuildOptions = R"( --profile PROF    debug (the default) or release.
 --flag FFLAGS     Fortran compiler flags. Appended to the profile flags when
                   --profile is given; otherwise they replace the defaults.
                   Object and module directories are always passed.
 --compiler NAME   Fortran compiler; defaults to $FPM_COMPILER, then gfortran.
)";

}  // namespace

std::string subcommand_list() {
  std::string out;
  for (const auto sub : all_subcommands()) out += fmt::format("  {:<9} {}\n", to_string(sub), summary(sub));
  return out;
}

std::string usage_text() {
  return fmt::format(
      "fpm - build system and package manager for Fortran projects\n"
      "\n"
      "USAGE: fpm [ SUBCOMMAND [SUBCOMMAND_OPTIONS] ]|[--list|--help|--version]\n"
      "       where SUBCOMMAND is commonly new|build|run|test\n"
      "\n"
      " subcommand may be one of\n"
      "\n"
      "{}"
      "\n"
      " \"fpm --list\" prints the subcommands alone; \"fpm SUBCOMMAND --help\"\n"
      " describes the options of one subcommand.\n",
      subcommand_list());
}

std::string version_text() { return fmt::format("fpm (forge) version {}\n", kVersion); }

std::string subcommand_help(Subcommand sub) {
  switch (sub) {
    case Subcommand::build:
      return fmt::format(
          "fpm build [--profile PROF] [--flag FFLAGS] [--compiler NAME] [--list] [--show-model]\n"
          "\n"
          "Resolves dependencies, scans the sources under src/, app/, test/ and\n"
          "example/ (or the directories named in fpm.toml), and compiles everything\n"
          "in module dependency order. Only changed sources and what depends on\n"
          "them are recompiled. Outputs go to build/<compiler>_<hash>/, one\n"
          "directory per compiler and flag set.\n"
          "\n"
          "{}"
          " --list            print the buildable targets and exit\n"
          " --show-model      print the package model and exit without building\n"
          "\n"
          "Examples:\n"
          "  fpm build\n"
          "  fpm build --profile release\n",
          kBuildOptions);
    case Subcommand::run:
      return fmt::format(
          "fpm run [NAME...] [--example] [--profile PROF] [--flag FFLAGS] [--compiler NAME] [--list]\n"
          "        [-- ARGS...]\n"
          "\n"
          "Builds what is needed and runs application programs (example programs\n"
          "with --example). With no NAME the single candidate is run. ARGS after\n"
          "-- are passed to the program; its exit status is returned.\n"
          "\n"
          "{}"
          " --example         choose from the example programs\n"
          " --list            list the candidates instead of running them\n",
          kBuildOptions);
    case Subcommand::test:
      return fmt::format(
          "fpm test [NAME...] [--profile PROF] [--flag FFLAGS] [--compiler NAME] [--list] [-- ARGS...]\n"
          "\n"
          "Builds and runs the test programs (all of them when no NAME is given).\n"
          "Fails if any test program exits with a nonzero status.\n"
          "\n"
          "{}"
          " --list            list the test programs instead of running them\n",
          kBuildOptions);
    case Subcommand::new_package:
      return "fpm new NAME\n"
             "\n"
             "Creates directory NAME with fpm.toml, src/NAME.f90, app/main.f90,\n"
             "test/check.f90, README.md and .gitignore. The result builds and its\n"
             "test passes as is.\n";
    case Subcommand::update:
      return "fpm update\n"
             "\n"
             "Fetches the latest commit of dependencies that follow a branch or the\n"
             "default branch. Dependencies pinned by tag or rev are left alone.\n"
             "The cache lives in build/dependencies unless FORGE_CACHE_DIR is set.\n";
    case Subcommand::install:
      return fmt::format(
          "fpm install [--prefix DIR] [--profile PROF] [--flag FFLAGS] [--compiler NAME] [--list]\n"
          "\n"
          "Builds the application programs (release profile unless --profile or\n"
          "--flag is given) and copies them to DIR/bin. DIR defaults to ~/.local.\n"
          "\n"
          "{}"
          " --prefix DIR      installation prefix\n"
          " --list            list what would be installed\n",
          kBuildOptions);
    case Subcommand::list: return "fpm list\n\nPrints the subcommands with a one-line description.\n";
    case Subcommand::help: return "fpm help [SUBCOMMAND]\n\nPrints the general or per-subcommand help.\n";
    case Subcommand::version: return "fpm version\n\nPrints the program version.\n";
    case Subcommand::none: break;
  }
  return usage_text();
}

Invocation parse_args(const std::vector<std::string>& argv) {
  Invocation inv;
  std::vector<std::string> args = argv;
  if (auto dash = std::find(args.begin(), args.end(), "--"); dash != args.end()) {
    inv.passthrough.assign(dash + 1, args.end());
    args.erase(dash, args.end());
  }
  // Flag strings usually start with '-'; bind them to --flag explicitly.
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--flag") {
      args[i] = "--flag=" + args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    }
  }

  CLI::App app{"fpm"};
  app.set_help_flag();
  app.require_subcommand(0, 1);
  app.add_flag("-h,--help", inv.help);
  app.add_flag("--version", inv.version);
  app.add_flag("--list", inv.list);

  std::map<CLI::App*, Subcommand> subs;
  auto add = [&](Subcommand sub) {
    auto* cmd = app.add_subcommand(std::string(to_string(sub)), std::string(summary(sub)));
    cmd->add_flag("-h,--help", inv.help);
    cmd->add_flag("--version", inv.version);
    subs[cmd] = sub;
    return cmd;
  };
  auto build_options = [&](CLI::App* cmd) {
    cmd->add_option("--profile", inv.profile)->check(CLI::IsMember({"debug", "release"}));
    cmd->add_option("--flag", inv.flag)->allow_extra_args(false);
    cmd->add_option("--compiler", inv.compiler);
    cmd->add_flag("--list", inv.list);
  };

  add(Subcommand::new_package)->add_option("name", inv.names)->expected(0, 1);
  auto* build = add(Subcommand::build);
  build_options(build);
  build->add_flag("--show-model", inv.show_model);
  auto* run = add(Subcommand::run);
  build_options(run);
  run->add_flag("--example", inv.example);
  run->add_option("names", inv.names);
  auto* test = add(Subcommand::test);
  build_options(test);
  test->add_option("names", inv.names);
  add(Subcommand::update);
  auto* install = add(Subcommand::install);
  build_options(install);
  install->add_option("--prefix", inv.prefix);
  add(Subcommand::list);
  add(Subcommand::help)->add_option("topic", inv.help_topic);
  add(Subcommand::version);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  for (const auto& [cmd, sub] : subs)
    if (cmd->parsed()) inv.subcommand = sub;

  if (!inv.passthrough.empty() && inv.subcommand != Subcommand::run && inv.subcommand != Subcommand::test)
    throw UsageError("arguments after -- are only accepted by run and test");
  if (inv.subcommand == Subcommand::help && !inv.help_topic.empty()) {
    const auto& all = all_subcommands();
    if (std::none_of(all.begin(), all.end(), [&](Subcommand s) { return to_string(s) == inv.help_topic; }))
      throw UsageError(fmt::format("unknown help topic '{}'", inv.help_topic));
  }
  return inv;
}

namespace {

std::optional<std::string> env_value(const Environment& env, const std::string& key) {
  auto it = env.find(key);
  if (it == env.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::set<std::string> split_list(const std::string& text) {
  std::set<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    auto item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!item.empty()) out.insert(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Everything a subcommand needs to build part of the project.
struct Session {
  fs::path root;
  Manifest manifest;
  CompilerProfile compiler;
  BuildContext context;
  PackageModel model;
};

Session open_session(const Invocation& inv, CliContext& ctx, bool release_by_default = false) {
  Session s;
  auto root = find_project_root(ctx.cwd);
  if (!root)
    throw UsageError(fmt::format("no {} found in {} or any parent directory", kManifestFile, ctx.cwd.string()));
  s.root = *root;

  std::vector<std::string> warnings;
  s.manifest = load_manifest(s.root, warnings);

  s.compiler = detect_toolchain(inv.compiler, ctx.env);
  auto profile = inv.profile;
  if (release_by_default && !profile && !inv.flag) profile = "release";
  s.context.project_root = s.root;
  s.context.flags = effective_flags(profile, inv.flag, s.compiler);
  s.context.c_flags = effective_c_flags(profile, s.compiler);
  s.context.output_dir = output_dir(s.root, s.context.flags, s.compiler);

  const auto cache = default_cache_dir(s.root, env_value(ctx.env, "FORGE_CACHE_DIR").value_or("").c_str());
  GitClient git;
  auto resolution = resolve(s.manifest, s.root, cache, git);
  warnings.insert(warnings.end(), resolution.warnings.begin(), resolution.warnings.end());
  for (const auto& w : warnings) ctx.err << w << '\n';

  const auto sources = collect_sources(resolution.packages);
  s.model = build_model(s.manifest, resolution.packages, sources);
  return s;
}

std::unique_ptr<Toolchain> make_toolchain(const Session& s, const CliContext& ctx) {
  if (s.compiler.is_mock()) {
    const auto log = env_value(ctx.env, "FORGE_MOCK_LOG").value_or((s.context.output_dir / "mock.log").string());
    return std::make_unique<MockToolchain>(log, split_list(env_value(ctx.env, "FORGE_MOCK_FAIL").value_or("")));
  }
  return std::make_unique<ProcessToolchain>(s.compiler, s.root);
}

int workers_for(const CliContext& ctx) {
  if (ctx.workers > 0) return ctx.workers;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Builds `only` (everything when empty). Returns true on success.
bool build(const Session& s, CliContext& ctx, const std::optional<std::set<std::string>>& only) {
  auto toolchain = make_toolchain(s, ctx);
  BuildRequest req{&s.model, s.context, s.compiler, workers_for(ctx), only};
  const auto report = run_build(req, *toolchain);

  for (const auto& id : report.failed) {
    ctx.err << "error: " << id << " failed\n";
    if (auto it = report.diagnostics.find(id); it != report.diagnostics.end()) ctx.err << it->second;
  }
  for (const auto& id : report.skipped) ctx.err << "skipped " << id << " (a prerequisite failed)\n";
  for (const auto& id : report.built) {
    if (auto it = report.diagnostics.find(id); it != report.diagnostics.end()) ctx.err << it->second;
  }
  if (report.up_to_date())
    ctx.err << "build: up to date\n";
  else
    ctx.err << fmt::format("build: {} built, {} failed, {} skipped\n", report.built.size(), report.failed.size(),
                           report.skipped.size());
  return report.ok();
}

int cmd_build(const Invocation& inv, CliContext& ctx) {
  auto s = open_session(inv, ctx);
  if (inv.show_model) {
    ctx.out << render_model(s.model);
    return kExitOk;
  }
  if (inv.list) {
    for (const auto& id : topo_order(s.model)) {
      const auto& t = s.model.targets.at(id);
      if (t.kind != TargetKind::object) ctx.out << t.output_name << '\n';
    }
    return kExitOk;
  }
  return build(s, ctx, std::nullopt) ? kExitOk : kExitBuildFailure;
}

std::vector<const BuildTarget*> select(const Session& s, const Invocation& inv, ExecutableRole role,
                                       bool all_by_default, CliContext& ctx) {
  const auto candidates = s.model.executables(role);
  std::string listing;
  for (const auto* t : candidates) listing += t->name + '\n';

  if (inv.names.empty()) {
    if (candidates.empty()) throw UsageError(fmt::format("no {} programs in this package", to_string(role)));
    if (candidates.size() == 1 || all_by_default) return candidates;
    ctx.out << listing;
    throw UsageError(fmt::format("several {} programs available; name one of them", to_string(role)));
  }
  std::vector<const BuildTarget*> chosen;
  for (const auto& name : inv.names) {
    auto it = std::find_if(candidates.begin(), candidates.end(), [&](const BuildTarget* t) { return t->name == name; });
    if (it == candidates.end()) {
      ctx.out << listing;
      throw UsageError(fmt::format("no {} program named '{}'", to_string(role), name));
    }
    chosen.push_back(*it);
  }
  return chosen;
}

int cmd_run(const Invocation& inv, CliContext& ctx, ExecutableRole role) {
  auto s = open_session(inv, ctx);
  if (inv.list) {
    for (const auto* t : s.model.executables(role)) ctx.out << t->name << '\n';
    return kExitOk;
  }
  const auto chosen = select(s, inv, role, role == ExecutableRole::test, ctx);
  std::set<std::string> ids;
  for (const auto* t : chosen) ids.insert(t->id);
  if (!build(s, ctx, ids)) return kExitBuildFailure;

  int status = kExitOk;
  for (const auto* t : chosen) {
    std::vector<std::string> argv{(s.context.output_dir / t->output_name).string()};
    argv.insert(argv.end(), inv.passthrough.begin(), inv.passthrough.end());
    const int rc = run_streaming(argv, s.root, ctx.out);
    if (rc != 0) {
      ctx.err << fmt::format("{} exited with status {}\n", t->name, rc);
      if (status == kExitOk) status = rc;
    }
  }
  return status;
}

int cmd_install(const Invocation& inv, CliContext& ctx) {
  auto s = open_session(inv, ctx, /*release_by_default=*/true);
  const auto apps = s.model.executables(ExecutableRole::app);
  if (apps.empty()) throw UsageError("no executables to install");

  fs::path prefix;
  if (inv.prefix) {
    prefix = fs::path(*inv.prefix).is_absolute() ? fs::path(*inv.prefix) : ctx.cwd / *inv.prefix;
  } else {
    auto home = env_value(ctx.env, "HOME");
    if (!home) throw UsageError("HOME is not set; pass --prefix");
    prefix = fs::path(*home) / ".local";
  }
  const auto bin = prefix / "bin";
  if (inv.list) {
    for (const auto* t : apps) ctx.out << (bin / t->name).string() << '\n';
    return kExitOk;
  }

  std::set<std::string> ids;
  for (const auto* t : apps) ids.insert(t->id);
  if (!build(s, ctx, ids)) return kExitBuildFailure;

  std::error_code ec;
  fs::create_directories(bin, ec);
  if (ec) throw BuildError(fmt::format("cannot create {}: {}", bin.string(), ec.message()));
  for (const auto* t : apps) {
    const auto dest = bin / t->name;
    const auto staging = bin / fmt::format(".{}.install", t->name);
    fs::copy_file(s.context.output_dir / t->output_name, staging, fs::copy_options::overwrite_existing, ec);
    if (!ec) fs::permissions(staging, fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec |
                                          fs::perms::others_read | fs::perms::others_exec, ec);
    if (!ec) fs::rename(staging, dest, ec);
    if (ec) {
      fs::remove(staging, ec);
      throw BuildError(fmt::format("cannot install {}: {}", dest.string(), ec.message()));
    }
    ctx.err << "installed " << dest.string() << '\n';
  }
  return kExitOk;
}

int cmd_update(CliContext& ctx) {
  auto root = find_project_root(ctx.cwd);
  if (!root)
    throw UsageError(fmt::format("no {} found in {} or any parent directory", kManifestFile, ctx.cwd.string()));
  std::vector<std::string> warnings;
  const auto manifest = load_manifest(*root, warnings);
  const auto cache = default_cache_dir(*root, env_value(ctx.env, "FORGE_CACHE_DIR").value_or("").c_str());
  GitClient git;
  const auto report = update(manifest, *root, cache, git);
  for (const auto& w : warnings) ctx.err << w << '\n';
  for (const auto& w : report.resolution.warnings) ctx.err << w << '\n';
  for (const auto& line : report.summary) ctx.out << line << '\n';
  return kExitOk;
}

int dispatch(const Invocation& inv, CliContext& ctx) {
  if (inv.version) {
    ctx.out << version_text();
    return kExitOk;
  }
  if (inv.help) {
    ctx.out << (inv.subcommand == Subcommand::none ? usage_text() : subcommand_help(inv.subcommand));
    return kExitOk;
  }
  switch (inv.subcommand) {
    case Subcommand::none:
      ctx.out << (inv.list ? subcommand_list() : usage_text());
      return kExitOk;
    case Subcommand::list: ctx.out << subcommand_list(); return kExitOk;
    case Subcommand::version: ctx.out << version_text(); return kExitOk;
    case Subcommand::help:
      ctx.out << (inv.help_topic.empty() ? usage_text()
                                         : subcommand_help(*std::find_if(
                                               all_subcommands().begin(), all_subcommands().end(),
                                               [&](Subcommand s) { return to_string(s) == inv.help_topic; })));
      return kExitOk;
    case Subcommand::new_package: {
      if (inv.names.empty()) throw UsageError("new requires a package name");
      const auto dir = create_package(inv.names.front(), ctx.cwd);
      ctx.err << "created " << dir.string() << '\n';
      return kExitOk;
    }
    case Subcommand::build: return cmd_build(inv, ctx);
    case Subcommand::run:
      return cmd_run(inv, ctx, inv.example ? ExecutableRole::example : ExecutableRole::app);
    case Subcommand::test: return cmd_run(inv, ctx, ExecutableRole::test);
    case Subcommand::update: return cmd_update(ctx);
    case Subcommand::install: return cmd_install(inv, ctx);
  }
  return kExitUsage;
}

}  // namespace

std::optional<fs::path> find_project_root(const fs::path& start) {
  std::error_code ec;
  auto dir = fs::absolute(start, ec).lexically_normal();
  while (true) {
    if (fs::is_regular_file(dir / kManifestFile, ec)) return dir;
    if (!dir.has_relative_path()) return std::nullopt;
    dir = dir.parent_path();
  }
}

int run_cli(const std::vector<std::string>& args, CliContext& ctx) {
  try {
    return dispatch(parse_args(args), ctx);
  } catch (const UsageError& e) {
    ctx.err << "fpm: error: " << e.what() << "\nRun 'fpm --help' for usage.\n";
    return kExitUsage;
  } catch (const ManifestError& e) {
    ctx.err << "fpm: error: manifest: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ScanError& e) {
    ctx.err << "fpm: error: scanning sources:\n" << e.what() << '\n';
    return kExitUsage;
  } catch (const ModelError& e) {
    ctx.err << "fpm: error: package model: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ResolveError& e) {
    ctx.err << "fpm: error: dependencies: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    ctx.err << "fpm: error: " << e.what() << '\n';
    return kExitBuildFailure;
  }
}

}  // namespace forge
