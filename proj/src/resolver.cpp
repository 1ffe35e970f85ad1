#include "forge/resolver.hpp"

#include "forge/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kCheckoutMeta = ".forge-checkout";

struct CheckoutMeta {
  std::string url;
  std::string rev;
};

std::optional<CheckoutMeta> read_meta(const fs::path& dir) {
  std::ifstream in(dir / kCheckoutMeta);
  if (!in) return std::nullopt;
  CheckoutMeta meta;
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with("url ")) meta.url = line.substr(4);
    if (line.starts_with("rev ")) meta.rev = line.substr(4);
  }
  if (meta.url.empty() || meta.rev.empty()) return std::nullopt;
  return meta;
}

void write_meta(const fs::path& dir, const CheckoutMeta& meta) {
  std::ofstream out(dir / kCheckoutMeta, std::ios::trunc);
  out << "url " << meta.url << '\n' << "rev " << meta.rev << '\n';
  if (!out) throw ResolveError(fmt::format("cannot write {}", (dir / kCheckoutMeta).string()));
}

std::string trimmed(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string describe_ref(const GitRef& ref) {
  if (ref.kind == RefKind::none) return "default branch";
  return fmt::format("{} {}", to_string(ref.kind), ref.value);
}

[[noreturn]] void git_failure(const std::string& name, const GitOrigin& origin, const ProcessResult& r) {
  throw ResolveError(fmt::format("failed to fetch dependency '{}' from {} ({}):\n{}", name, origin.url,
                                 describe_ref(origin.ref), trimmed(r.output)));
}

std::string head_rev(GitClient& git, const fs::path& dir, const std::string& name, const GitOrigin& origin) {
  auto r = git.run({"rev-parse", "HEAD"}, dir);
  if (!r.ok()) git_failure(name, origin, r);
  return trimmed(r.output);
}

}  // namespace

ProcessResult GitClient::run(const std::vector<std::string>& args, const fs::path& cwd) {
  if (!args.empty() && (args.front() == "clone" || args.front() == "fetch")) ++network_calls_;
  std::vector<std::string> argv{"git"};
  argv.insert(argv.end(), args.begin(), args.end());
  return run_capture(argv, cwd, {{"GIT_TERMINAL_PROMPT", "0"}});
}

std::string sanitize_ref(const GitRef& ref) {
  if (ref.kind == RefKind::none) return "HEAD";
  std::string out = fmt::format("{}-", to_string(ref.kind));
  for (const char c : ref.value)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-') ? c : '_';
  return out;
}

Checkout fetch_git(const std::string& name, const GitOrigin& origin, const fs::path& cache_dir, GitClient& git,
                   const FetchOptions& options) {
  const auto entry_root = cache_dir / name;
  const auto key = sanitize_ref(origin.ref);
  const auto dir = entry_root / key;
  std::error_code ec;
  fs::create_directories(entry_root, ec);
  if (ec) throw ResolveError(fmt::format("cannot create cache directory {}: {}", entry_root.string(), ec.message()));
  FileLock lock(entry_root / (key + ".lock"), /*blocking=*/true);

  if (auto meta = read_meta(dir); meta && meta->url == origin.url) {
    const bool pinned = origin.ref.kind == RefKind::tag || origin.ref.kind == RefKind::rev;
    if (pinned || !options.refresh || options.offline) return {dir, meta->rev};

    const std::string what = origin.ref.kind == RefKind::branch ? origin.ref.value : "HEAD";
    auto r = git.run({"fetch", "--quiet", "origin", what}, dir);
    if (!r.ok()) git_failure(name, origin, r);
    r = git.run({"checkout", "--quiet", "--detach", "FETCH_HEAD"}, dir);
    if (!r.ok()) git_failure(name, origin, r);
    meta->rev = head_rev(git, dir, name, origin);
    write_meta(dir, *meta);
    return {dir, meta->rev};
  }

  if (options.offline)
    throw ResolveError(fmt::format("dependency '{}' ({}, {}) is not cached and offline mode is set", name,
                                   origin.url, describe_ref(origin.ref)));

  const auto staging = entry_root / (key + ".partial");
  fs::remove_all(staging, ec);
  std::vector<std::string> clone{"clone", "--quiet"};
  if (origin.ref.kind == RefKind::tag || origin.ref.kind == RefKind::branch) {
    clone.push_back("--branch");
    clone.push_back(origin.ref.value);
  }
  clone.push_back(origin.url);
  clone.push_back(staging.string());
  auto r = git.run(clone, cache_dir);
  if (!r.ok()) {
    fs::remove_all(staging, ec);
    git_failure(name, origin, r);
  }
  if (origin.ref.kind == RefKind::rev) {
    r = git.run({"checkout", "--quiet", "--detach", origin.ref.value}, staging);
    if (!r.ok()) {
      fs::remove_all(staging, ec);
      git_failure(name, origin, r);
    }
  }
  CheckoutMeta meta{origin.url, head_rev(git, staging, name, origin)};
  if (origin.ref.kind == RefKind::rev && !meta.rev.starts_with(lower(origin.ref.value))) {
    fs::remove_all(staging, ec);
    throw ResolveError(fmt::format("dependency '{}': checked out {} but rev {} was requested", name, meta.rev,
                                   origin.ref.value));
  }
  write_meta(staging, meta);
  fs::remove_all(dir, ec);
  fs::rename(staging, dir, ec);
  if (ec) throw ResolveError(fmt::format("cannot move checkout into {}: {}", dir.string(), ec.message()));
  return {dir, meta.rev};
}

namespace {

struct Request {
  std::string requester;
  DependencySpec spec;
  fs::path base_dir;
  bool from_remote = false;
};

struct Claim {
  std::string requester;
  std::string description;
  std::string key;
};

std::string origin_key(const DependencySpec& spec, const fs::path& base_dir) {
  if (const auto* g = spec.git()) return fmt::format("git\n{}\n{}\n{}", g->url, to_string(g->ref.kind), g->ref.value);
  return "path\n" + fs::weakly_canonical(base_dir / spec.path()->path).generic_string();
}

bool escapes(const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute() || p.has_root_name()) return true;
  const auto normal = p.lexically_normal();
  return !normal.empty() && *normal.begin() == "..";
}

void order_packages(const std::string& name, const std::map<std::string, ResolvedPackage>& all,
                    std::vector<std::string>& stack, std::set<std::string>& done, std::vector<std::string>& out) {
  if (done.contains(name)) return;
  if (auto it = std::find(stack.begin(), stack.end(), name); it != stack.end()) {
    std::string cycle;
    for (; it != stack.end(); ++it) cycle += *it + " -> ";
    throw ResolveError(fmt::format("dependency cycle: {}{}", cycle, name));
  }
  stack.push_back(name);
  auto deps = all.at(name).depends_on;
  std::sort(deps.begin(), deps.end());
  for (const auto& dep : deps) order_packages(dep, all, stack, done, out);
  stack.pop_back();
  done.insert(name);
  out.push_back(name);
}

}  // namespace

Resolution resolve(const Manifest& root_manifest, const fs::path& root_dir, const fs::path& cache_dir,
                   GitClient& git, const ResolveOptions& options) {
  Resolution result;
  std::map<std::string, ResolvedPackage> packages;
  std::map<std::string, Claim> claims;
  std::deque<Request> queue;

  ResolvedPackage root{root_manifest.name, RootOrigin{}, fs::absolute(root_dir).lexically_normal(), root_manifest,
                       std::nullopt, {}};
  for (const auto& [name, spec] : root_manifest.dependencies) {
    root.depends_on.push_back(name);
    queue.push_back({root.name, spec, root.local_dir, false});
  }
  if (options.include_dev) {
    for (const auto& [name, spec] : root_manifest.dev_dependencies) {
      if (std::find(root.depends_on.begin(), root.depends_on.end(), name) == root.depends_on.end())
        root.depends_on.push_back(name);
      queue.push_back({root.name, spec, root.local_dir, false});
    }
  }
  claims[root.name] = {"", "the root package", "root"};
  packages.emplace(root.name, root);

  while (!queue.empty()) {
    Request req = std::move(queue.front());
    queue.pop_front();
    const auto& name = req.spec.name;

    if (req.from_remote) {
      if (const auto* p = req.spec.path(); p && escapes(p->path))
        throw ResolveError(fmt::format(
            "package '{}' fetched from git declares path dependency '{}' = '{}' outside its checkout",
            req.requester, name, p->path));
    }

    const auto key = origin_key(req.spec, req.base_dir);
    if (auto it = claims.find(name); it != claims.end()) {
      if (it->second.key != key)
        result.warnings.push_back(fmt::format(
            "warning: dependency '{}' requested by '{}' as {} conflicts with the request by '{}' as {}; using "
            "the first",
            name, req.requester, req.spec.describe(), it->second.requester, it->second.description));
      continue;
    }
    claims[name] = {req.requester, req.spec.describe(), key};

    ResolvedPackage pkg;
    pkg.name = name;
    bool remote = req.from_remote;
    if (const auto* g = req.spec.git()) {
      const auto checkout = fetch_git(name, *g, cache_dir, git, {options.offline, options.refresh});
      pkg.origin = *g;
      pkg.local_dir = checkout.local_dir;
      pkg.pinned_rev = checkout.pinned_rev;
      remote = true;
    } else {
      pkg.origin = *req.spec.path();
      pkg.local_dir = fs::weakly_canonical(req.base_dir / req.spec.path()->path);
    }

    std::error_code ec;
    if (!fs::is_regular_file(pkg.local_dir / kManifestFile, ec))
      throw ResolveError(fmt::format("dependency '{}' ({}) has no {} in {}", name, req.spec.describe(),
                                     kManifestFile, pkg.local_dir.string()));
    pkg.manifest = load_manifest(pkg.local_dir, result.warnings);
    if (pkg.manifest.name != name)
      throw ResolveError(fmt::format("dependency '{}' requested by '{}' resolves to a package named '{}'", name,
                                     req.requester, pkg.manifest.name));

    for (const auto& [dep_name, spec] : pkg.manifest.dependencies) {
      pkg.depends_on.push_back(dep_name);
      queue.push_back({name, spec, pkg.local_dir, remote});
    }
    packages.emplace(name, std::move(pkg));
  }

  std::vector<std::string> order;
  std::vector<std::string> stack;
  std::set<std::string> done;
  order_packages(root.name, packages, stack, done, order);
  for (const auto& name : order) result.packages.push_back(std::move(packages.at(name)));
  return result;
}

UpdateReport update(const Manifest& root_manifest, const fs::path& root_dir, const fs::path& cache_dir,
                    GitClient& git) {
  UpdateReport report;
  const auto before = resolve(root_manifest, root_dir, cache_dir, git, {});
  report.resolution = resolve(root_manifest, root_dir, cache_dir, git, {.refresh = true});

  std::map<std::string, std::string> old_revs;
  for (const auto& p : before.packages)
    if (p.pinned_rev) old_revs[p.name] = *p.pinned_rev;

  for (const auto& p : report.resolution.packages) {
    if (p.is_root()) continue;
    if (!p.pinned_rev) {
      report.summary.push_back(fmt::format("{}: local path, nothing to fetch", p.name));
      continue;
    }
    const auto& old = old_revs[p.name];
    const auto& now = *p.pinned_rev;
    if (old == now)
      report.summary.push_back(fmt::format("{}: {} (unchanged)", p.name, now));
    else
      report.summary.push_back(fmt::format("{}: {} -> {}", p.name, old, now));
  }
  if (report.summary.empty()) report.summary.push_back("nothing to update");
  return report;
}

fs::path default_cache_dir(const fs::path& project_root, const char* env_override) {
  if (env_override && *env_override) {
    const fs::path p(env_override);
    return p.is_absolute() ? p : project_root / p;
  }
  return project_root / "build" / "dependencies";
}

}  // namespace forge
