#pragma once

#include "forge/digest.hpp"
#include "forge/engine.hpp"
#include "forge/manifest.hpp"
#include "forge/model.hpp"
#include "forge/process.hpp"
#include "forge/resolver.hpp"
#include "forge/scanner.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "forge-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = fs::canonical(tmpl);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const fs::path& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

// git with a fixed identity so fixture repos work on a bare machine.
inline std::string git(const std::vector<std::string>& args, const fs::path& cwd) {
  std::vector<std::string> argv{"git",
                                "-c", "user.name=Fixture",
                                "-c", "user.email=fixture@example.invalid",
                                "-c", "init.defaultBranch=main",
                                "-c", "commit.gpgsign=false",
                                "-c", "tag.gpgsign=false"};
  argv.insert(argv.end(), args.begin(), args.end());
  const auto r = run_capture(argv, cwd);
  if (!r.ok()) {
    std::string cmd;
    for (const auto& a : args) cmd += " " + a;
    throw std::runtime_error("git" + cmd + " failed: " + r.output);
  }
  return trim(r.output);
}

inline bool have_git() { return !find_program("git").empty(); }

// A library package `name` with one module `<name>_mod` at `dir`.
inline void write_library_package(const fs::path& dir, const std::string& name, const std::string& version,
                                  const std::string& deps_toml = {}, const std::string& uses = {}) {
  std::string toml = "name = \"" + name + "\"\nversion = \"" + version + "\"\n";
  if (!deps_toml.empty()) toml += "\n[dependencies]\n" + deps_toml;
  write_file(dir / "fpm.toml", toml);
  std::string mod = name;
  std::replace(mod.begin(), mod.end(), '-', '_');
  std::string body = "module " + mod + "_mod\n";
  if (!uses.empty()) body += "  use " + uses + "\n";
  body += "  implicit none\n  character(len=*), parameter :: version = \"" + version + "\"\nend module " + mod +
          "_mod\n";
  write_file(dir / "src" / (mod + "_mod.f90"), body);
}

inline std::string commit_all(const fs::path& repo, const std::string& message) {
  git({"add", "-A"}, repo);
  git({"commit", "--quiet", "-m", message}, repo);
  return git({"rev-parse", "HEAD"}, repo);
}

inline void init_repo(const fs::path& repo) {
  fs::create_directories(repo);
  git({"init", "--quiet"}, repo);
}

inline std::string file_url(const fs::path& p) { return "file://" + p.string(); }

// Full pipeline short of building.
struct Loaded {
  Manifest manifest;
  Resolution resolution;
  SourcesByPackage sources;
  PackageModel model;
};

inline Loaded load_project(const fs::path& root, const fs::path& cache_dir) {
  Loaded l;
  std::vector<std::string> warnings;
  l.manifest = load_manifest(root, warnings);
  GitClient client;
  l.resolution = resolve(l.manifest, root, cache_dir, client);
  l.sources = collect_sources(l.resolution.packages);
  l.model = build_model(l.manifest, l.resolution.packages, l.sources);
  return l;
}

struct LogEvent {
  std::string event;
  long long ns = 0;
  std::string target;
  std::string status;
};

inline std::vector<LogEvent> read_mock_log(const fs::path& file) {
  std::vector<LogEvent> out;
  std::istringstream in(read_file(file));
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    LogEvent e;
    ls >> e.event >> e.ns >> e.target >> e.status;
    if (!e.event.empty()) out.push_back(e);
  }
  return out;
}

inline std::set<std::string> started_targets(const std::vector<LogEvent>& log) {
  std::set<std::string> out;
  for (const auto& e : log)
    if (e.event == "start") out.insert(e.target);
  return out;
}

// Forward closure by fixpoint iteration over the raw prerequisite sets.
inline std::set<std::string> brute_force_dependents(const PackageModel& model, const std::set<std::string>& seeds) {
  std::set<std::string> closed = seeds;
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& [id, t] : model.targets) {
      if (closed.count(id)) continue;
      for (const auto& p : t.prerequisites)
        if (closed.count(p)) {
          closed.insert(id);
          grew = true;
          break;
        }
    }
  }
  return closed;
}

// Edge check: every prerequisite sits at an earlier index.
inline bool order_respects_prerequisites(const PackageModel& model, const std::vector<std::string>& order) {
  if (order.size() != model.targets.size()) return false;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  if (pos.size() != order.size()) return false;
  for (const auto& [id, t] : model.targets) {
    auto self = pos.find(id);
    if (self == pos.end()) return false;
    for (const auto& p : t.prerequisites) {
      auto it = pos.find(p);
      if (it == pos.end() || it->second >= self->second) return false;
    }
  }
  return true;
}

using Rng = std::mt19937_64;

inline int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(v.size()) - 1))];
}

// Random module DAG rendered as Fortran sources. Module names are shuffled
// relative to topological position so lexicographic order gives no hints.
struct RandomDag {
  std::vector<std::string> names;
  std::map<std::string, std::set<std::string>> uses;
  std::map<std::string, std::string> files;  // path -> text
};

inline RandomDag random_dag(Rng& rng, int nodes, double density) {
  RandomDag d;
  for (int i = 0; i < nodes; ++i) d.names.push_back("m" + std::to_string(i));
  std::shuffle(d.names.begin(), d.names.end(), rng);
  for (int i = 0; i < nodes; ++i) {
    auto& u = d.uses[d.names[i]];
    for (int j = 0; j < i; ++j)
      if (coin(rng, density)) u.insert(d.names[j]);
  }
  for (const auto& name : d.names) {
    std::string text = "module " + name + "\n";
    for (const auto& u : d.uses[name]) text += "  use " + u + "\n";
    text += "  implicit none\nend module " + name + "\n";
    d.files["src/" + name + ".f90"] = text;
  }
  if (!d.names.empty()) {
    std::string prog = "program main\n";
    for (int k = 0; k < 3; ++k) prog += "  use " + pick(rng, d.names) + "\n";
    prog += "end program main\n";
    d.files["app/main.f90"] = prog;
  }
  return d;
}

// A root package held in memory; build_model never touches the disk.
inline ResolvedPackage memory_root(const std::string& name, const fs::path& dir = "/nonexistent/pkg") {
  ResolvedPackage p;
  p.name = name;
  p.origin = RootOrigin{};
  p.local_dir = dir;
  p.manifest = default_manifest(name);
  return p;
}

inline std::vector<SourceInfo> scan_memory(const std::map<std::string, std::string>& files) {
  std::vector<SourceInfo> out;
  for (const auto& [path, text] : files) out.push_back(scan_fortran(path, text));
  return out;
}

// Builds `loaded` with the mock toolchain into `out`, logging to `log`.
inline BuildReport mock_build(const PackageModel& model, const fs::path& root, const fs::path& out, int workers,
                              const fs::path& log, std::set<std::string> failures = {},
                              const std::optional<std::string>& profile = std::nullopt) {
  const auto compiler = detect_toolchain(std::string(kMockCompiler), {});
  BuildContext ctx{root, out, effective_flags(profile, std::nullopt, compiler), effective_c_flags(profile, compiler)};
  BuildRequest req{&model, ctx, compiler, workers, std::nullopt};
  MockToolchain toolchain(log, std::move(failures));
  return run_build(req, toolchain);
}

// c0 <- c1 <- ... <- c(n-1) <- app/main.f90
inline void write_chain_project(const fs::path& root, int n) {
  write_file(root / "fpm.toml", "name = \"chain\"\n");
  for (int i = 0; i < n; ++i) {
    std::string text = "module c" + std::to_string(i) + "\n";
    if (i > 0) text += "  use c" + std::to_string(i - 1) + "\n";
    text += "  implicit none\nend module c" + std::to_string(i) + "\n";
    write_file(root / "src" / ("c" + std::to_string(i) + ".f90"), text);
  }
  write_file(root / "app/main.f90",
             "program main\n  use c" + std::to_string(n - 1) + "\n  implicit none\nend program main\n");
}

// Two independent module branches a* and b* of 12 modules each, two apps and
// one test: 31 targets.
inline void write_wide_project(const fs::path& root) {
  write_file(root / "fpm.toml", "name = \"wide\"\n");
  for (const char* branch : {"a", "b"}) {
    for (int i = 0; i < 12; ++i) {
      const auto name = std::string(branch) + std::to_string(i);
      std::string text = "module " + name + "\n";
      if (i > 0) text += "  use " + std::string(branch) + std::to_string(i - 1) + "\n";
      if (i > 2) text += "  use " + std::string(branch) + std::to_string(i / 3) + "\n";
      text += "end module " + name + "\n";
      write_file(root / "src" / (name + ".f90"), text);
    }
  }
  write_file(root / "app/alpha.f90", "program alpha\n  use a11\nend program alpha\n");
  write_file(root / "app/beta.f90", "program beta\n  use b11\nend program beta\n");
  write_file(root / "test/check.f90", "program check\n  use a0\nend program check\n");
}

// Digest of every regular file under dir, excluding the mock log.
inline std::map<std::string, std::uint64_t> artifact_digests(const fs::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "mock.log" || e.path().filename() == ".lock") continue;
    out[fs::relative(e.path(), dir).generic_string()] = digest_bytes(read_file(e.path()));
  }
  return out;
}

}  // namespace forge::testing
