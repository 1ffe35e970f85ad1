#include "forge/digest.hpp"
#include "forge/engine.hpp"
#include "forge/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

extern char** environ;

namespace forge {

namespace fs = std::filesystem;

Environment process_environment() {
  Environment env;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return env;
}

std::string_view to_string(CompilerFamily family) noexcept {
  switch (family) {
    case CompilerFamily::gfortran: return "gfortran";
    case CompilerFamily::intel: return "intel";
    case CompilerFamily::flang: return "flang";
    case CompilerFamily::nvidia: return "nvidia";
    case CompilerFamily::generic: return "generic";
    case CompilerFamily::mock: return "mock";
  }
  return "generic";
}

namespace {

// Flag tables. Documented in README.md; tests assert them verbatim.
const std::vector<std::string> kGfortranDebug{
    "-Wall",      "-Wextra",         "-Wimplicit-interface", "-fPIC",       "-fmax-errors=1",
    "-g",         "-fcheck=bounds",  "-fcheck=array-temps",  "-fbacktrace", "-ffpe-trap=invalid,zero,overflow"};
const std::vector<std::string> kGfortranRelease{"-O3", "-Wimplicit-interface", "-fPIC", "-fmax-errors=1",
                                                "-funroll-loops"};
const std::vector<std::string> kIntelDebug{"-warn", "all", "-check", "all", "-g", "-traceback", "-fpe0"};
const std::vector<std::string> kIntelRelease{"-O3", "-fPIC"};
const std::vector<std::string> kNvidiaDebug{"-g", "-Mbounds", "-traceback"};
const std::vector<std::string> kNvidiaRelease{"-fast"};
const std::vector<std::string> kGenericDebug{"-g"};
const std::vector<std::string> kGenericRelease{"-O2"};
const std::vector<std::string> kCDebug{"-g", "-Wall"};
const std::vector<std::string> kCRelease{"-O3"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

CompilerFamily family_of(const std::string& basename) {
  const auto name = lower(basename);
  if (name.find("gfortran") != std::string::npos) return CompilerFamily::gfortran;
  if (name.starts_with("ifort") || name.starts_with("ifx")) return CompilerFamily::intel;
  if (name.starts_with("flang")) return CompilerFamily::flang;
  if (name.starts_with("nvfortran") || name.starts_with("pgfortran")) return CompilerFamily::nvidia;
  return CompilerFamily::generic;
}

std::string sanitize_id(const std::string& name) {
  std::string out;
  for (const char c : lower(name))
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out.empty() ? "compiler" : out;
}

}  // namespace

CompilerProfile detect_toolchain(const std::optional<std::string>& cli_compiler, const Environment& env) {
  std::string name(kDefaultCompiler);
  if (cli_compiler && !cli_compiler->empty()) {
    name = *cli_compiler;
  } else if (auto it = env.find("FPM_COMPILER"); it != env.end() && !it->second.empty()) {
    name = it->second;
  }

  CompilerProfile p;
  p.executable = name;
  p.c_profiles = {{"debug", kCDebug}, {"release", kCRelease}};
  p.module_output_flag = {"-J", "{dir}"};

  if (name == kMockCompiler) {
    p.family = CompilerFamily::mock;
    p.compiler_id = "mock";
    p.c_compiler = "MOCK-CC";
    p.profiles = {{"debug", kGfortranDebug}, {"release", kGfortranRelease}};
    return p;
  }

  const auto basename = fs::path(name).filename().string();
  p.family = family_of(basename);
  p.compiler_id = sanitize_id(basename);
  p.c_compiler = p.family == CompilerFamily::gfortran ? "gcc" : "cc";
  switch (p.family) {
    case CompilerFamily::gfortran:
      p.profiles = {{"debug", kGfortranDebug}, {"release", kGfortranRelease}};
      break;
    case CompilerFamily::intel:
      p.profiles = {{"debug", kIntelDebug}, {"release", kIntelRelease}};
      p.module_output_flag = {"-module", "{dir}"};
      break;
    case CompilerFamily::nvidia:
      p.profiles = {{"debug", kNvidiaDebug}, {"release", kNvidiaRelease}};
      p.module_output_flag = {"-module", "{dir}"};
      break;
    case CompilerFamily::flang:
      p.profiles = {{"debug", kGenericDebug}, {"release", kGenericRelease}};
      p.module_output_flag = {"-module-dir", "{dir}"};
      break;
    default:
      p.profiles = {{"debug", kGenericDebug}, {"release", kGenericRelease}};
  }
  return p;
}

std::vector<std::string> split_flags(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  bool have = false;
  char quote = 0;
  for (const char c : text) {
    if (quote) {
      if (c == quote)
        quote = 0;
      else
        cur += c;
    } else if (c == '\'' || c == '"') {
      quote = c;
      have = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (have) out.push_back(std::move(cur));
      cur.clear();
      have = false;
    } else {
      cur += c;
      have = true;
    }
  }
  if (have) out.push_back(std::move(cur));
  return out;
}

namespace {

const std::vector<std::string>& profile_flags(const std::map<std::string, std::vector<std::string>>& table,
                                              const std::string& name) {
  auto it = table.find(name);
  if (it == table.end()) throw UsageError(fmt::format("unknown profile '{}' (expected debug or release)", name));
  return it->second;
}

}  // namespace

std::vector<std::string> effective_flags(const std::optional<std::string>& profile,
                                         const std::optional<std::string>& extra, const CompilerProfile& compiler) {
  if (!profile && !extra) return profile_flags(compiler.profiles, "debug");
  if (!profile) return split_flags(*extra);
  auto flags = profile_flags(compiler.profiles, *profile);
  if (extra) {
    auto more = split_flags(*extra);
    flags.insert(flags.end(), more.begin(), more.end());
  }
  return flags;
}

std::vector<std::string> effective_c_flags(const std::optional<std::string>& profile,
                                           const CompilerProfile& compiler) {
  return profile_flags(compiler.c_profiles, profile.value_or("debug"));
}

fs::path output_dir(const fs::path& project_root, const std::vector<std::string>& flags,
                    const CompilerProfile& compiler) {
  Hasher h;
  h.field(compiler.executable).field(to_string(compiler.family)).field(compiler.c_compiler);
  h.field("fortran");
  for (const auto& f : flags) h.field(f);
  return project_root / "build" / fmt::format("{}_{}", compiler.compiler_id, h.hex());
}

namespace {

std::string display(const fs::path& p, const fs::path& root) {
  const auto rel = p.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

std::vector<fs::path> module_files_for(const SourceInfo& src, const fs::path& mod_dir) {
  std::vector<fs::path> out;
  if (src.unit_kind == UnitKind::fortran_submodule) {
    for (const auto& name : src.provides) out.push_back(mod_dir / fmt::format("{}@{}.smod", *src.parents.begin(), name));
  } else if (is_fortran(src.unit_kind)) {
    for (const auto& name : src.provides) out.push_back(mod_dir / (name + ".mod"));
  }
  return out;
}

}  // namespace

ToolCommand make_command(const PackageModel& model, const BuildTarget& target, const BuildContext& context,
                         const CompilerProfile& compiler) {
  const auto& root = context.project_root;
  const auto& out = context.output_dir;
  auto rel = [&](const fs::path& p) { return display(p.lexically_normal(), root); };

  ToolCommand cmd;
  cmd.target_id = target.id;
  cmd.kind = target.kind;
  const auto output = out / target.output_name;
  cmd.outputs.push_back(output);

  switch (target.kind) {
    case TargetKind::object: {
      const auto& pkg = model.package(target.package);
      const auto& src = *target.source;
      const auto source = pkg.source_dir / src.path;
      cmd.inputs.push_back(source);
      for (const auto& inc : src.includes)
        cmd.inputs.push_back(fs::path(inc).is_absolute() ? fs::path(inc) : pkg.source_dir / inc);

      if (!is_fortran(src.unit_kind)) {
        cmd.uses_c_compiler = true;
        cmd.argv.push_back(compiler.c_compiler);
        cmd.argv.insert(cmd.argv.end(), context.c_flags.begin(), context.c_flags.end());
        cmd.argv.insert(cmd.argv.end(), {"-c", rel(source), "-o", rel(output)});
        break;
      }
      const auto mod_dir = out / "mod" / target.package;
      cmd.argv.push_back(compiler.executable);
      cmd.argv.insert(cmd.argv.end(), context.flags.begin(), context.flags.end());
      cmd.argv.insert(cmd.argv.end(), {"-c", rel(source)});
      for (const auto& piece : compiler.module_output_flag)
        cmd.argv.push_back(piece == "{dir}" ? rel(mod_dir) : piece);
      cmd.argv.push_back(compiler.include_flag + rel(mod_dir));
      for (const auto& dep : pkg.closure) cmd.argv.push_back(compiler.include_flag + rel(out / "mod" / dep));
      cmd.argv.insert(cmd.argv.end(), {"-o", rel(output)});
      cmd.module_files = module_files_for(src, mod_dir);
      break;
    }
    case TargetKind::archive: {
      cmd.argv = compiler.archiver;
      cmd.argv.push_back(rel(output));
      for (const auto& pre : target.prerequisites) {
        const auto obj = out / model.targets.at(pre).output_name;
        cmd.argv.push_back(rel(obj));
        cmd.inputs.push_back(obj);
      }
      break;
    }
    case TargetKind::executable: {
      cmd.argv.push_back(compiler.executable);
      cmd.argv.insert(cmd.argv.end(), context.flags.begin(), context.flags.end());
      cmd.argv.insert(cmd.argv.end(), {"-o", rel(output)});
      std::vector<std::string> objects{target.main_object};
      for (const auto& pre : target.prerequisites)
        if (pre != target.main_object && model.targets.at(pre).kind == TargetKind::object) objects.push_back(pre);
      for (const auto& id : objects) {
        const auto obj = out / model.targets.at(id).output_name;
        cmd.argv.push_back(rel(obj));
        cmd.inputs.push_back(obj);
      }
      for (const auto& id : target.link_archives) {
        const auto lib = out / model.targets.at(id).output_name;
        cmd.argv.push_back(rel(lib));
        cmd.inputs.push_back(lib);
      }
      for (const auto& lib : target.link_libraries) cmd.argv.push_back("-l" + lib);
      break;
    }
  }
  return cmd;
}

}  // namespace forge
