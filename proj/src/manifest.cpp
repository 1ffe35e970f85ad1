#include "forge/manifest.hpp"

#include "forge/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#define TOML_ENABLE_FORMATTERS 0
#include <toml.hpp>

namespace forge {

namespace fs = std::filesystem;

std::string_view to_string(RefKind kind) noexcept {
  switch (kind) {
    case RefKind::tag: return "tag";
    case RefKind::branch: return "branch";
    case RefKind::rev: return "rev";
    case RefKind::none: break;
  }
  return "none";
}

std::string DependencySpec::describe() const {
  if (const auto* g = git()) {
    if (g->ref.kind == RefKind::none) return fmt::format("git {} (default branch)", g->url);
    return fmt::format("git {} {} {}", g->url, to_string(g->ref.kind), g->ref.value);
  }
  return fmt::format("path {}", path()->path);
}

bool is_valid_package_name(std::string_view name) noexcept {
  if (name.empty() || !std::isalpha(static_cast<unsigned char>(name.front()))) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

namespace {

bool is_valid_version(std::string_view v) {
  int parts = 0;
  std::size_t pos = 0;
  while (true) {
    const auto dot = v.find('.', pos);
    const auto part = v.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
    if (part.empty() || !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return false;
    ++parts;
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return parts == 3;
}

bool is_hex_rev(std::string_view rev) {
  return rev.size() >= 7 && rev.size() <= 40 &&
         std::all_of(rev.begin(), rev.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

bool is_bare_filename(std::string_view name) {
  return !name.empty() && name != "." && name != ".." && name.find('/') == std::string_view::npos &&
         name.find('\\') == std::string_view::npos;
}

bool is_contained_relative(std::string_view dir) {
  if (dir.empty()) return false;
  const fs::path p{std::string(dir)};
  if (p.is_absolute() || p.has_root_name()) return false;
  return std::none_of(p.begin(), p.end(), [](const fs::path& seg) { return seg == ".."; });
}

[[noreturn]] void schema_error(const std::string& key_path, const std::string& what, int line = 0) {
  throw ManifestError(fmt::format("{} at {}", what, key_path), key_path, line);
}

void validate_executables(const std::vector<ExecutableSpec>& specs, std::string_view section) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    const auto at = fmt::format("{}[{}]", section, i);
    if (spec.name.empty()) schema_error(at + ".name", "missing executable name");
    if (!is_valid_package_name(spec.name))
      schema_error(at + ".name", fmt::format("invalid executable name '{}'", spec.name));
    if (!seen.insert(spec.name).second)
      schema_error(at + ".name", fmt::format("duplicate executable name '{}'", spec.name));
    if (!is_bare_filename(spec.main))
      schema_error(at + ".main", fmt::format("main '{}' must be a bare file name", spec.main));
    if (!is_contained_relative(spec.source_dir))
      schema_error(at + ".source-dir",
                   fmt::format("source-dir '{}' must be relative without '..'", spec.source_dir));
  }
}

void validate_dependencies(const std::map<std::string, DependencySpec>& deps, std::string_view section) {
  for (const auto& [key, dep] : deps) {
    const auto at = fmt::format("{}.{}", section, key);
    if (!is_valid_package_name(key) || dep.name != key)
      schema_error(at, fmt::format("invalid dependency name '{}'", key));
    if (const auto* g = dep.git()) {
      if (g->url.empty()) schema_error(at + ".git", "empty git url");
      if (g->ref.kind != RefKind::none && g->ref.value.empty())
        schema_error(fmt::format("{}.{}", at, to_string(g->ref.kind)), "empty ref");
      if (g->ref.kind == RefKind::rev && !is_hex_rev(g->ref.value))
        schema_error(at + ".rev", fmt::format("invalid rev '{}' (expected 7-40 hex digits)", g->ref.value));
    } else {
      const auto& p = dep.path()->path;
      if (p.empty()) schema_error(at + ".path", "empty path");
      if (fs::path(p).is_absolute()) schema_error(at + ".path", fmt::format("path '{}' must be relative", p));
    }
  }
}

void validate_names(const std::vector<std::string>& names, std::string_view key) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i].empty()) schema_error(fmt::format("{}[{}]", key, i), "empty name");
}

// --- TOML reading --------------------------------------------------------

class Reader {
 public:
  Reader(const fs::path& base_dir, std::vector<std::string>& warnings)
      : label_(base_dir.empty() ? std::string(kManifestFile) : (base_dir / kManifestFile).string()),
        warnings_(warnings) {}

  const std::string& label() const { return label_; }

  [[noreturn]] void fail(const toml::node& node, const std::string& key_path, const std::string& what) const {
    const int line = static_cast<int>(node.source().begin.line);
    throw ManifestError(fmt::format("{}:{}: {} at {}", label_, line, what, key_path), key_path, line);
  }

  void allow_only(const toml::table& tbl, const std::string& prefix, std::initializer_list<std::string_view> known) {
    for (auto&& [k, v] : tbl) {
      const std::string_view key = k.str();
      if (std::find(known.begin(), known.end(), key) != known.end()) continue;
      const auto path = prefix.empty() ? std::string(key) : fmt::format("{}.{}", prefix, key);
      const auto line = static_cast<int>(v.source().begin.line);
      pending_.emplace_back(line, fmt::format("{}:{}: warning: unknown key '{}' ignored", label_, line, path));
    }
  }

  // Warnings in file order.
  void flush_warnings() {
    std::stable_sort(pending_.begin(), pending_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [line, text] : pending_) warnings_.push_back(std::move(text));
    pending_.clear();
  }

  std::optional<std::string> string(const toml::table& tbl, std::string_view key, const std::string& path) {
    const auto* node = tbl.get(key);
    if (!node) return std::nullopt;
    if (const auto* s = node->as_string()) return s->get();
    fail(*node, path, "expected a string");
  }

  std::optional<bool> boolean(const toml::table& tbl, std::string_view key, const std::string& path) {
    const auto* node = tbl.get(key);
    if (!node) return std::nullopt;
    if (const auto* b = node->as_boolean()) return b->get();
    fail(*node, path, "expected a boolean");
  }

  // Accepts a single string as shorthand for a one-element list.
  std::vector<std::string> string_list(const toml::table& tbl, std::string_view key, const std::string& path) {
    std::vector<std::string> out;
    const auto* node = tbl.get(key);
    if (!node) return out;
    if (const auto* s = node->as_string()) {
      out.push_back(s->get());
      return out;
    }
    const auto* arr = node->as_array();
    if (!arr) fail(*node, path, "expected an array of strings");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* s = (*arr)[i].as_string();
      if (!s) fail((*arr)[i], fmt::format("{}[{}]", path, i), "expected a string");
      out.push_back(s->get());
    }
    return out;
  }

  const toml::table* table(const toml::table& tbl, std::string_view key, const std::string& path) {
    const auto* node = tbl.get(key);
    if (!node) return nullptr;
    if (const auto* t = node->as_table()) return t;
    fail(*node, path, "expected a table");
  }

  std::vector<ExecutableSpec> executables(const toml::table& root, std::string_view section,
                                          std::string_view default_dir) {
    std::vector<ExecutableSpec> out;
    const auto* node = root.get(section);
    if (!node) return out;
    const auto* arr = node->as_array();
    if (!arr) fail(*node, std::string(section), fmt::format("expected an array of tables ([[{}]])", section));
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto at = fmt::format("{}[{}]", section, i);
      const auto* t = (*arr)[i].as_table();
      if (!t) fail((*arr)[i], at, "expected a table");
      allow_only(*t, at, {"name", "source-dir", "main"});
      ExecutableSpec spec;
      auto name = string(*t, "name", at + ".name");
      if (!name) fail(*t, at + ".name", "missing required key");
      spec.name = std::move(*name);
      spec.source_dir = string(*t, "source-dir", at + ".source-dir").value_or(std::string(default_dir));
      spec.main = string(*t, "main", at + ".main").value_or("main.f90");
      out.push_back(std::move(spec));
    }
    return out;
  }

  std::map<std::string, DependencySpec> dependencies(const toml::table& root, std::string_view section) {
    std::map<std::string, DependencySpec> out;
    const auto* tbl = table(root, section, std::string(section));
    if (!tbl) return out;
    for (auto&& [k, v] : *tbl) {
      const std::string name(k.str());
      const auto at = fmt::format("{}.{}", section, name);
      const auto* dep = v.as_table();
      if (!dep) fail(v, at, "expected an inline table with git or path");
      allow_only(*dep, at, {"git", "path", "tag", "branch", "rev"});

      auto git = string(*dep, "git", at + ".git");
      auto path = string(*dep, "path", at + ".path");
      if (git && path) fail(*dep, at, "conflicting origins git/path");
      if (!git && !path) fail(*dep, at, "missing origin (git or path)");

      std::vector<std::pair<RefKind, std::string>> refs;
      for (const auto kind : {RefKind::tag, RefKind::branch, RefKind::rev}) {
        if (auto value = string(*dep, to_string(kind), fmt::format("{}.{}", at, to_string(kind))))
          refs.emplace_back(kind, std::move(*value));
      }
      if (refs.size() > 1)
        fail(*dep, at, fmt::format("conflicting refs {}/{}", to_string(refs[0].first), to_string(refs[1].first)));

      DependencySpec spec{name, PathOrigin{}};
      if (git) {
        GitOrigin origin{std::move(*git), {}};
        if (!refs.empty()) origin.ref = GitRef{refs[0].first, std::move(refs[0].second)};
        spec.origin = std::move(origin);
      } else {
        if (!refs.empty())
          fail(*dep, fmt::format("{}.{}", at, to_string(refs[0].first)), "ref requires a git origin");
        spec.origin = PathOrigin{std::move(*path)};
      }
      out.emplace(name, std::move(spec));
    }
    return out;
  }

 private:
  std::string label_;
  std::vector<std::string>& warnings_;
  std::vector<std::pair<int, std::string>> pending_;
};

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (const char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\f': out += "\\f"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7f)
          out += fmt::format("\\u{:04X}", static_cast<unsigned>(c));
        else
          out += ch;
    }
  }
  out += '"';
  return out;
}

std::string render_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += quote(items[i]);
  }
  return out + "]";
}

void render_executables(std::ostringstream& os, const std::vector<ExecutableSpec>& specs, std::string_view section) {
  for (const auto& spec : specs) {
    os << "\n[[" << section << "]]\n";
    os << "name = " << quote(spec.name) << '\n';
    os << "source-dir = " << quote(spec.source_dir) << '\n';
    os << "main = " << quote(spec.main) << '\n';
  }
}

void render_dependencies(std::ostringstream& os, const std::map<std::string, DependencySpec>& deps,
                         std::string_view section) {
  if (deps.empty()) return;
  os << "\n[" << section << "]\n";
  for (const auto& [name, dep] : deps) {
    os << name << " = { ";
    if (const auto* g = dep.git()) {
      os << "git = " << quote(g->url);
      if (g->ref.kind != RefKind::none) os << ", " << to_string(g->ref.kind) << " = " << quote(g->ref.value);
    } else {
      os << "path = " << quote(dep.path()->path);
    }
    os << " }\n";
  }
}

}  // namespace

void validate(const Manifest& m) {
  if (m.name.empty()) schema_error("name", "missing required key");
  if (!is_valid_package_name(m.name)) schema_error("name", fmt::format("invalid package name '{}'", m.name));
  if (!is_valid_version(m.version))
    schema_error("version", fmt::format("invalid version '{}' (expected major.minor.patch)", m.version));
  if (!is_contained_relative(m.library.source_dir))
    schema_error("library.source-dir",
                 fmt::format("source-dir '{}' must be relative without '..'", m.library.source_dir));
  validate_executables(m.executables, "executable");
  validate_executables(m.tests, "test");
  validate_executables(m.examples, "example");
  validate_dependencies(m.dependencies, "dependencies");
  validate_dependencies(m.dev_dependencies, "dev-dependencies");
  validate_names(m.build.link, "build.link");
  validate_names(m.build.external_modules, "build.external-modules");
}

Manifest parse_manifest(std::string_view text, const fs::path& base_dir, std::vector<std::string>& warnings) {
  Reader reader(base_dir, warnings);
  toml::table root;
  try {
    root = toml::parse(text, reader.label());
  } catch (const toml::parse_error& e) {
    const int line = static_cast<int>(e.source().begin.line);
    throw ManifestError(fmt::format("{}:{}: syntax error: {}", reader.label(), line, e.description()), "", line);
  }

  reader.allow_only(root, "",
                    {"name", "version", "library", "executable", "test", "example", "dependencies",
                     "dev-dependencies", "build"});

  Manifest m;
  auto name = reader.string(root, "name", "name");
  if (!name) throw ManifestError(fmt::format("{}: missing required key at name", reader.label()), "name");
  m.name = std::move(*name);
  if (auto version = reader.string(root, "version", "version")) m.version = std::move(*version);

  if (const auto* lib = reader.table(root, "library", "library")) {
    reader.allow_only(*lib, "library", {"source-dir"});
    if (auto dir = reader.string(*lib, "source-dir", "library.source-dir")) m.library.source_dir = std::move(*dir);
  }

  m.executables = reader.executables(root, "executable", "app");
  m.tests = reader.executables(root, "test", "test");
  m.examples = reader.executables(root, "example", "example");
  m.dependencies = reader.dependencies(root, "dependencies");
  m.dev_dependencies = reader.dependencies(root, "dev-dependencies");

  if (const auto* build = reader.table(root, "build", "build")) {
    reader.allow_only(*build, "build",
                      {"link", "external-modules", "auto-executables", "auto-tests", "auto-examples"});
    m.build.link = reader.string_list(*build, "link", "build.link");
    m.build.external_modules = reader.string_list(*build, "external-modules", "build.external-modules");
    m.build.auto_executables = reader.boolean(*build, "auto-executables", "build.auto-executables").value_or(true);
    m.build.auto_tests = reader.boolean(*build, "auto-tests", "build.auto-tests").value_or(true);
    m.build.auto_examples = reader.boolean(*build, "auto-examples", "build.auto-examples").value_or(true);
  }

  try {
    validate(m);
  } catch (const ManifestError& e) {
    throw ManifestError(fmt::format("{}: {}", reader.label(), e.what()), e.key_path(), e.line());
  }
  reader.flush_warnings();
  return m;
}

Manifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  std::vector<std::string> ignored;
  return parse_manifest(text, base_dir, ignored);
}

Manifest load_manifest(const fs::path& dir, std::vector<std::string>& warnings) {
  const auto file = dir / kManifestFile;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ManifestError(fmt::format("cannot read {}", file.string()), "");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), dir, warnings);
}

std::string manifest_template(std::string_view name) {
  return fmt::format(
      "name = {}\n"
      "version = \"0.1.0\"\n"
      "\n"
      "[build]\n"
      "auto-executables = true\n"
      "auto-tests = true\n"
      "auto-examples = true\n",
      quote(name));
}

Manifest default_manifest(std::string_view name) {
  if (!is_valid_package_name(name))
    throw ManifestError(fmt::format("invalid package name '{}' at name", name), "name");
  return parse_manifest(manifest_template(name));
}

std::string render_manifest(const Manifest& m) {
  std::ostringstream os;
  os << "name = " << quote(m.name) << '\n';
  os << "version = " << quote(m.version) << '\n';
  os << "\n[library]\n";
  os << "source-dir = " << quote(m.library.source_dir) << '\n';
  os << "\n[build]\n";
  os << "auto-executables = " << (m.build.auto_executables ? "true" : "false") << '\n';
  os << "auto-tests = " << (m.build.auto_tests ? "true" : "false") << '\n';
  os << "auto-examples = " << (m.build.auto_examples ? "true" : "false") << '\n';
  os << "link = " << render_list(m.build.link) << '\n';
  os << "external-modules = " << render_list(m.build.external_modules) << '\n';
  render_executables(os, m.executables, "executable");
  render_executables(os, m.tests, "test");
  render_executables(os, m.examples, "example");
  render_dependencies(os, m.dependencies, "dependencies");
  render_dependencies(os, m.dev_dependencies, "dev-dependencies");
  return os.str();
}

}  // namespace forge
