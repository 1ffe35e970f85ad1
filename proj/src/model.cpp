#include "forge/model.hpp"
#include "forge/digest.hpp"

#include "forge/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;

std::string_view to_string(TargetKind kind) noexcept {
  switch (kind) {
    case TargetKind::object: return "object";
    case TargetKind::archive: return "archive";
    case TargetKind::executable: return "executable";
  }
  return "unknown";
}

std::string_view to_string(ExecutableRole role) noexcept {
  switch (role) {
    case ExecutableRole::app: return "app";
    case ExecutableRole::test: return "test";
    case ExecutableRole::example: return "example";
  }
  return "unknown";
}

const ModelPackage& PackageModel::package(const std::string& name) const {
  for (const auto& p : packages)
    if (p.name == name) return p;
  throw ModelError(fmt::format("unknown package '{}'", name));
}

std::vector<const BuildTarget*> PackageModel::executables(ExecutableRole role) const {
  std::vector<const BuildTarget*> out;
  for (const auto& [id, t] : targets)
    if (t.kind == TargetKind::executable && t.role == role) out.push_back(&t);
  return out;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string parent_dir(const std::string& path) { return fs::path(path).parent_path().generic_string(); }

bool under(const std::string& path, const std::string& dir) {
  const auto normal = fs::path(dir).lexically_normal().generic_string();
  if (normal == "." || normal.empty()) return true;
  return path.size() > normal.size() && path.compare(0, normal.size(), normal) == 0 && path[normal.size()] == '/';
}

std::string object_id(const std::string& package, const std::string& path) {
  return fmt::format("obj/{}/{}", package, path);
}
std::string archive_id(const std::string& package) { return fmt::format("lib/{}", package); }

struct RoleDirs {
  ExecutableRole role;
  std::string default_dir;
  bool automatic;
  const std::vector<ExecutableSpec>* declared;
};

std::vector<RoleDirs> role_dirs(const Manifest& m) {
  return {{ExecutableRole::app, "app", m.build.auto_executables, &m.executables},
          {ExecutableRole::test, "test", m.build.auto_tests, &m.tests},
          {ExecutableRole::example, "example", m.build.auto_examples, &m.examples}};
}

std::set<std::string> executable_dirs(const Manifest& m) {
  std::set<std::string> dirs;
  for (const auto& r : role_dirs(m)) {
    if (r.automatic) dirs.insert(r.default_dir);
    for (const auto& spec : *r.declared) dirs.insert(fs::path(spec.source_dir).lexically_normal().generic_string());
  }
  return dirs;
}

// Dependency order over depends_on, independent of the input order.
std::vector<const ResolvedPackage*> package_order(const std::string& root,
                                                  const std::vector<ResolvedPackage>& packages) {
  std::map<std::string, const ResolvedPackage*> by_name;
  for (const auto& p : packages) {
    if (!by_name.emplace(p.name, &p).second) throw ModelError(fmt::format("package '{}' listed twice", p.name));
  }
  if (!by_name.contains(root)) throw ModelError(fmt::format("root package '{}' missing from the package list", root));

  std::vector<const ResolvedPackage*> out;
  std::set<std::string> done;
  std::vector<std::string> stack;
  std::function<void(const std::string&)> visit = [&](const std::string& name) {
    if (done.contains(name)) return;
    if (std::find(stack.begin(), stack.end(), name) != stack.end())
      throw ModelError(fmt::format("package dependency cycle through '{}'", name));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ModelError(fmt::format("dependency '{}' was not resolved", name));
    stack.push_back(name);
    auto deps = it->second->depends_on;
    std::sort(deps.begin(), deps.end());
    for (const auto& d : deps) visit(d);
    stack.pop_back();
    done.insert(name);
    out.push_back(it->second);
  };
  visit(root);
  return out;
}

std::vector<std::string> closure_of(const std::vector<std::string>& direct,
                                    const std::map<std::string, const ResolvedPackage*>& by_name,
                                    const std::vector<const ResolvedPackage*>& order) {
  std::set<std::string> reach;
  std::vector<std::string> stack(direct.begin(), direct.end());
  while (!stack.empty()) {
    auto name = stack.back();
    stack.pop_back();
    if (!reach.insert(name).second) continue;
    for (const auto& d : by_name.at(name)->depends_on) stack.push_back(d);
  }
  std::vector<std::string> out;
  for (const auto* p : order)
    if (reach.contains(p->name)) out.push_back(p->name);
  return out;
}

void check_object_cycles(const PackageModel& model) {
  enum class Mark { none, active, done };
  std::map<std::string, Mark> marks;
  std::vector<std::string> path;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    auto& mark = marks[id];
    if (mark == Mark::done) return;
    if (mark == Mark::active) {
      // Named by module where possible: a -> b means a uses b.
      auto label = [&](const std::string& t) {
        const auto& src = model.targets.at(t).source;
        if (src && !src->provides.empty()) return *src->provides.begin();
        return src ? src->path : t;
      };
      auto it = std::find(path.begin(), path.end(), id);
      std::string cycle;
      for (; it != path.end(); ++it) cycle += label(*it) + " -> ";
      throw ModelError(fmt::format("module dependency cycle: {}{}", cycle, label(id)));
    }
    mark = Mark::active;
    path.push_back(id);
    for (const auto& pre : model.targets.at(id).prerequisites) visit(pre);
    path.pop_back();
    marks[id] = Mark::done;
  };
  for (const auto& [id, t] : model.targets) visit(id);
}

}  // namespace

SourcesByPackage collect_sources(const std::vector<ResolvedPackage>& packages) {
  SourcesByPackage out;
  for (const auto& pkg : packages) {
    std::map<std::string, SourceInfo> found;
    auto add_dir = [&](const std::string& rel, bool recurse) {
      const auto dir = pkg.local_dir / rel;
      std::error_code ec;
      if (!fs::is_directory(dir, ec)) return;
      for (auto& info : scan_tree(dir, recurse, pkg.local_dir)) found.emplace(info.path, std::move(info));
    };
    add_dir(pkg.manifest.library.source_dir, true);
    if (pkg.is_root())
      for (const auto& dir : executable_dirs(pkg.manifest)) add_dir(dir, false);
    auto& list = out[pkg.name];
    for (auto& [path, info] : found) list.push_back(std::move(info));
  }
  return out;
}

PackageModel build_model(const Manifest& root_manifest, const std::vector<ResolvedPackage>& packages,
                         const SourcesByPackage& sources) {
  PackageModel model;
  model.root = root_manifest.name;

  const auto order = package_order(model.root, packages);
  std::map<std::string, const ResolvedPackage*> by_name;
  for (const auto* p : order) by_name[p->name] = p;

  std::vector<std::string> root_runtime_deps;
  for (const auto& [name, spec] : root_manifest.dependencies) root_runtime_deps.push_back(name);

  for (const auto* p : order) {
    ModelPackage mp{p->name, p->is_root() ? root_manifest : p->manifest, p->local_dir, {}};
    mp.closure = closure_of(p->depends_on, by_name, order);
    for (const auto& ext : mp.manifest.build.external_modules) model.external_modules.insert(lower(ext));
    model.packages.push_back(std::move(mp));
  }

  // Object targets.
  std::map<std::string, std::vector<std::string>> library_objects;
  std::map<std::string, std::vector<std::string>> dir_objects;  // root executable dirs
  for (const auto& mp : model.packages) {
    const bool is_root = mp.name == model.root;
    const auto exe_dirs = is_root ? executable_dirs(mp.manifest) : std::set<std::string>{};
    auto it = sources.find(mp.name);
    if (it == sources.end()) continue;
    auto list = it->second;
    std::sort(list.begin(), list.end(), [](const SourceInfo& a, const SourceInfo& b) { return a.path < b.path; });
    for (const auto& src : list) {
      if (src.unit_kind == UnitKind::c_header) continue;
      const bool in_library = under(src.path, mp.manifest.library.source_dir);
      const bool in_exe_dir = exe_dirs.contains(parent_dir(src.path));
      if (!in_library && !in_exe_dir) continue;

      BuildTarget t;
      t.id = object_id(mp.name, src.path);
      t.kind = TargetKind::object;
      t.package = mp.name;
      t.source = src;
      t.output_name = fmt::format("o/{}/{}.o", mp.name, src.path);
      if (in_library)
        library_objects[mp.name].push_back(t.id);
      else
        dir_objects[parent_dir(src.path)].push_back(t.id);
      model.targets.emplace(t.id, std::move(t));
    }
  }

  // Module index; iteration over sorted ids keeps the error deterministic.
  for (const auto& [id, t] : model.targets) {
    for (const auto& mod : t.source->provides) {
      auto [it, inserted] = model.module_index.emplace(mod, id);
      if (!inserted) {
        const auto& other = model.targets.at(it->second);
        throw ModelError(fmt::format("duplicate module '{}' provided by {}:{} and {}:{}", mod, other.package,
                                     other.source->path, t.package, t.source->path));
      }
    }
  }

  auto require_module = [&](BuildTarget& t, const std::string& mod, std::string_view relation) {
    auto it = model.module_index.find(mod);
    if (it == model.module_index.end()) {
      if (model.external_modules.contains(mod)) return;
      throw ModelError(fmt::format(
          "unresolved module '{}' {} {}:{}; if it is provided outside this build, list it in "
          "build.external-modules",
          mod, relation, t.package, t.source->path));
    }
    if (it->second == t.id) return;
    const auto& provider = model.targets.at(it->second);
    if (provider.package != t.package) {
      const auto& closure = model.package(t.package).closure;
      if (std::find(closure.begin(), closure.end(), provider.package) == closure.end())
        throw ModelError(fmt::format("module '{}' used by {}:{} is provided by package '{}', which is not a "
                                     "dependency of '{}'",
                                     mod, t.package, t.source->path, provider.package, t.package));
    }
    t.prerequisites.insert(it->second);
  };

  for (auto& [id, t] : model.targets) {
    for (const auto& mod : t.source->uses) require_module(t, mod, "used by");
    for (const auto& parent : t.source->parents) require_module(t, parent, "is the parent module of");
    if (t.source->parent_submodule) require_module(t, *t.source->parent_submodule, "is the parent submodule of");
  }
  check_object_cycles(model);

  // Archives.
  for (const auto& [pkg, objects] : library_objects) {
    BuildTarget t;
    t.id = archive_id(pkg);
    t.kind = TargetKind::archive;
    t.package = pkg;
    t.prerequisites.insert(objects.begin(), objects.end());
    t.output_name = fmt::format("lib/lib{}.a", pkg);
    model.targets.emplace(t.id, std::move(t));
  }

  // Executables of the root package.
  const auto& root = model.packages.back();
  const auto runtime_closure = closure_of(root_runtime_deps, by_name, order);
  const auto test_closure = root.closure;

  auto archives_for = [&](const std::vector<std::string>& closure) {
    std::vector<std::string> out;
    if (library_objects.contains(root.name)) out.push_back(archive_id(root.name));
    for (auto it = closure.rbegin(); it != closure.rend(); ++it)
      if (library_objects.contains(*it)) out.push_back(archive_id(*it));
    return out;
  };
  auto libraries_for = [&](const std::vector<std::string>& closure) {
    std::vector<std::string> all = root.manifest.build.link;
    for (auto it = closure.rbegin(); it != closure.rend(); ++it) {
      const auto& link = model.package(*it).manifest.build.link;
      all.insert(all.end(), link.begin(), link.end());
    }
    // Keep the last occurrence: a library must follow everything that needs it.
    std::vector<std::string> out;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (std::find(all.begin() + static_cast<std::ptrdiff_t>(i) + 1, all.end(), all[i]) == all.end())
        out.push_back(all[i]);
    return out;
  };

  auto source_of = [&](const std::string& path) -> const BuildTarget* {
    auto it = model.targets.find(object_id(root.name, path));
    return it == model.targets.end() ? nullptr : &it->second;
  };

  for (const auto& r : role_dirs(root.manifest)) {
    struct Candidate {
      std::string name;
      std::string main_path;
    };
    std::vector<Candidate> candidates;
    std::set<std::string> claimed_paths;
    std::set<std::string> declared_names;
    for (const auto& spec : *r.declared) {
      const auto path = (fs::path(spec.source_dir) / spec.main).lexically_normal().generic_string();
      if (!source_of(path))
        throw ModelError(fmt::format("{} '{}': main program {} not found", to_string(r.role), spec.name, path));
      candidates.push_back({spec.name, path});
      claimed_paths.insert(path);
      declared_names.insert(spec.name);
    }
    if (r.automatic) {
      for (const auto& id : dir_objects[r.default_dir]) {
        const auto& obj = model.targets.at(id);
        if (obj.source->unit_kind != UnitKind::fortran_program || claimed_paths.contains(obj.source->path)) continue;
        const fs::path p(obj.source->path);
        auto name = p.stem().string();
        if (r.role == ExecutableRole::app && p.filename() == "main.f90") name = root.name;
        if (declared_names.contains(name)) continue;
        for (const auto& c : candidates)
          if (c.name == name)
            throw ModelError(fmt::format("{} executables {} and {} both map to the name '{}'", to_string(r.role),
                                         c.main_path, obj.source->path, name));
        candidates.push_back({name, obj.source->path});
      }
    }

    const auto& closure = r.role == ExecutableRole::test ? test_closure : runtime_closure;
    for (const auto& c : candidates) {
      BuildTarget t;
      t.id = fmt::format("exe/{}/{}", to_string(r.role), c.name);
      t.kind = TargetKind::executable;
      t.package = root.name;
      t.role = r.role;
      t.name = c.name;
      t.main_object = object_id(root.name, c.main_path);
      t.prerequisites.insert(t.main_object);
      // Non-program sources next to the main program are linked in with it.
      for (const auto& id : dir_objects[parent_dir(c.main_path)]) {
        const auto kind = model.targets.at(id).source->unit_kind;
        if (kind != UnitKind::fortran_program && !claimed_paths.contains(model.targets.at(id).source->path))
          t.prerequisites.insert(id);
      }
      t.link_archives = archives_for(closure);
      t.prerequisites.insert(t.link_archives.begin(), t.link_archives.end());
      t.link_libraries = libraries_for(closure);
      t.output_name = fmt::format("{}/{}", to_string(r.role), c.name);
      model.targets.emplace(t.id, std::move(t));
    }
  }

  return model;
}

std::vector<std::string> topo_order(const PackageModel& model) {
  std::map<std::string, std::size_t> pending;
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& [id, t] : model.targets) {
    pending[id] = t.prerequisites.size();
    for (const auto& pre : t.prerequisites) {
      if (!model.targets.contains(pre))
        throw ModelError(fmt::format("target {} has unknown prerequisite {}", id, pre));
      dependents[pre].push_back(id);
    }
  }
  std::set<std::string> ready;
  for (const auto& [id, n] : pending)
    if (n == 0) ready.insert(id);

  std::vector<std::string> out;
  out.reserve(model.targets.size());
  while (!ready.empty()) {
    auto id = *ready.begin();
    ready.erase(ready.begin());
    for (const auto& dep : dependents[id])
      if (--pending[dep] == 0) ready.insert(dep);
    out.push_back(std::move(id));
  }
  if (out.size() != model.targets.size()) {
    std::string stuck;
    for (const auto& [id, n] : pending)
      if (n > 0) stuck += " " + id;
    throw ModelError(fmt::format("dependency cycle among targets:{}", stuck));
  }
  return out;
}

std::set<std::string> prerequisite_closure(const PackageModel& model, const std::set<std::string>& targets) {
  std::set<std::string> out;
  std::vector<std::string> stack(targets.begin(), targets.end());
  while (!stack.empty()) {
    auto id = stack.back();
    stack.pop_back();
    if (!out.insert(id).second) continue;
    for (const auto& pre : model.targets.at(id).prerequisites) stack.push_back(pre);
  }
  return out;
}

namespace {

template <typename Range>
std::string words(const Range& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ' ';
    out += item;
  }
  return out.empty() ? "-" : out;
}

}  // namespace

std::string render_model(const PackageModel& model) {
  const auto order = topo_order(model);
  std::ostringstream os;
  os << "model " << model.root << '\n';
  os << "external-modules " << words(model.external_modules) << '\n';
  for (const auto& p : model.packages) {
    os << "package " << p.name << ' ' << p.manifest.version << '\n';
    os << "  dir " << p.source_dir.generic_string() << '\n';
    os << "  depends " << words(p.closure) << '\n';
    for (const auto& id : order) {
      const auto& t = model.targets.at(id);
      if (t.package != p.name) continue;
      os << "  target " << t.id << '\n';
      os << "    kind " << to_string(t.kind) << '\n';
      if (t.source) {
        os << "    source " << t.source->path << ' ' << to_string(t.source->unit_kind) << ' '
           << to_hex(t.source->digest) << '\n';
        os << "    provides " << words(t.source->provides) << '\n';
        os << "    uses " << words(t.source->uses) << '\n';
        if (!t.source->includes.empty()) os << "    includes " << words(t.source->includes) << '\n';
      }
      os << "    prerequisites " << words(t.prerequisites) << '\n';
      if (t.kind == TargetKind::executable) {
        os << "    main " << t.main_object << '\n';
        os << "    archives " << words(t.link_archives) << '\n';
        os << "    link " << words(t.link_libraries) << '\n';
      }
      os << "    output " << t.output_name << '\n';
    }
  }
  return os.str();
}

}  // namespace forge
