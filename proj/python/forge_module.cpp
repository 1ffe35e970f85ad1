#include "forge/cli.hpp"
#include "forge/engine.hpp"
#include "forge/error.hpp"
#include "forge/manifest.hpp"
#include "forge/model.hpp"
#include "forge/resolver.hpp"
#include "forge/scanner.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

forge::PackageModel load_model(const fs::path& project_dir) {
  auto root = forge::find_project_root(project_dir);
  if (!root) throw forge::UsageError("no fpm.toml found in " + project_dir.string() + " or any parent directory");
  std::vector<std::string> warnings;
  const auto manifest = forge::load_manifest(*root, warnings);
  const auto env = forge::process_environment();
  auto it = env.find("FORGE_CACHE_DIR");
  const auto cache = forge::default_cache_dir(*root, it == env.end() ? nullptr : it->second.c_str());
  forge::GitClient git;
  const auto resolution = forge::resolve(manifest, *root, cache, git);
  return forge::build_model(manifest, resolution.packages, forge::collect_sources(resolution.packages));
}

}  // namespace

PYBIND11_MODULE(_forge, m) {
  m.doc() = "Fortran package manager core: manifests, source scanning, package model, build engine";

  static py::exception<forge::Error> error(m, "ForgeError", PyExc_RuntimeError);
  static py::exception<forge::ManifestError> manifest_error(m, "ManifestError", error.ptr());
  static py::exception<forge::ScanError> scan_error(m, "ScanError", error.ptr());
  static py::exception<forge::ModelError> model_error(m, "ModelError", error.ptr());
  static py::exception<forge::UsageError> usage_error(m, "UsageError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const forge::ManifestError& e) {
      py::set_error(manifest_error, e.what());
    } catch (const forge::ScanError& e) {
      py::set_error(scan_error, e.what());
    } catch (const forge::ModelError& e) {
      py::set_error(model_error, e.what());
    } catch (const forge::UsageError& e) {
      py::set_error(usage_error, e.what());
    } catch (const forge::Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<forge::ExecutableSpec>(m, "ExecutableSpec")
      .def_readonly("name", &forge::ExecutableSpec::name)
      .def_readonly("source_dir", &forge::ExecutableSpec::source_dir)
      .def_readonly("main", &forge::ExecutableSpec::main)
      .def("__eq__", [](const forge::ExecutableSpec& a, const forge::ExecutableSpec& b) { return a == b; });

  py::class_<forge::DependencySpec>(m, "DependencySpec")
      .def_readonly("name", &forge::DependencySpec::name)
      .def_property_readonly("git",
                             [](const forge::DependencySpec& d) -> std::optional<std::string> {
                               if (const auto* g = d.git()) return g->url;
                               return std::nullopt;
                             })
      .def_property_readonly("path",
                             [](const forge::DependencySpec& d) -> std::optional<std::string> {
                               if (const auto* p = d.path()) return p->path;
                               return std::nullopt;
                             })
      .def_property_readonly("ref_kind",
                             [](const forge::DependencySpec& d) -> std::optional<std::string> {
                               const auto* g = d.git();
                               if (!g || g->ref.kind == forge::RefKind::none) return std::nullopt;
                               return std::string(forge::to_string(g->ref.kind));
                             })
      .def_property_readonly("ref",
                             [](const forge::DependencySpec& d) -> std::optional<std::string> {
                               const auto* g = d.git();
                               if (!g || g->ref.kind == forge::RefKind::none) return std::nullopt;
                               return g->ref.value;
                             })
      .def("describe", &forge::DependencySpec::describe)
      .def("__eq__", [](const forge::DependencySpec& a, const forge::DependencySpec& b) { return a == b; });

  py::class_<forge::Manifest>(m, "Manifest")
      .def_readonly("name", &forge::Manifest::name)
      .def_readonly("version", &forge::Manifest::version)
      .def_property_readonly("library_source_dir", [](const forge::Manifest& x) { return x.library.source_dir; })
      .def_readonly("executables", &forge::Manifest::executables)
      .def_readonly("tests", &forge::Manifest::tests)
      .def_readonly("examples", &forge::Manifest::examples)
      .def_readonly("dependencies", &forge::Manifest::dependencies)
      .def_readonly("dev_dependencies", &forge::Manifest::dev_dependencies)
      .def_property_readonly("link", [](const forge::Manifest& x) { return x.build.link; })
      .def_property_readonly("external_modules", [](const forge::Manifest& x) { return x.build.external_modules; })
      .def_property_readonly("auto_executables", [](const forge::Manifest& x) { return x.build.auto_executables; })
      .def_property_readonly("auto_tests", [](const forge::Manifest& x) { return x.build.auto_tests; })
      .def_property_readonly("auto_examples", [](const forge::Manifest& x) { return x.build.auto_examples; })
      .def("__eq__", [](const forge::Manifest& a, const forge::Manifest& b) { return a == b; });

  py::class_<forge::SourceInfo>(m, "SourceInfo")
      .def_readonly("path", &forge::SourceInfo::path)
      .def_readonly("digest", &forge::SourceInfo::digest)
      .def_property_readonly("unit_kind", [](const forge::SourceInfo& s) { return std::string(forge::to_string(s.unit_kind)); })
      .def_readonly("provides", &forge::SourceInfo::provides)
      .def_readonly("uses", &forge::SourceInfo::uses)
      .def_readonly("parents", &forge::SourceInfo::parents)
      .def_readonly("includes", &forge::SourceInfo::includes);

  m.def(
      "parse_manifest",
      [](const std::string& text) {
        std::vector<std::string> warnings;
        auto manifest = forge::parse_manifest(text, {}, warnings);
        return py::make_tuple(std::move(manifest), std::move(warnings));
      },
      py::arg("text"), "Parse fpm.toml text; returns (Manifest, warnings).");
  m.def("default_manifest", [](const std::string& name) { return forge::default_manifest(name); }, py::arg("name"));
  m.def("render_manifest", &forge::render_manifest, py::arg("manifest"));

  m.def("normalize_source", [](const std::string& text) { return forge::normalize_source(text); }, py::arg("text"));
  m.def("scan_fortran", [](const std::string& path, const std::string& text) { return forge::scan_fortran(path, text); },
        py::arg("path"), py::arg("text"));
  m.def("scan_c", [](const std::string& path, const std::string& text) { return forge::scan_c(path, text); },
        py::arg("path"), py::arg("text"));
  m.def("scan_tree", &forge::scan_tree, py::arg("dir"), py::arg("recurse") = true,
        py::arg("package_root") = fs::path{});

  m.def(
      "effective_flags",
      [](std::optional<std::string> profile, std::optional<std::string> flag, std::optional<std::string> compiler) {
        return forge::effective_flags(profile, flag, forge::detect_toolchain(compiler, forge::process_environment()));
      },
      py::arg("profile") = py::none(), py::arg("flag") = py::none(), py::arg("compiler") = py::none());
  m.def(
      "output_dir",
      [](const fs::path& project_root, const std::vector<std::string>& flags, std::optional<std::string> compiler) {
        return forge::output_dir(project_root, flags, forge::detect_toolchain(compiler, forge::process_environment()));
      },
      py::arg("project_root"), py::arg("flags"), py::arg("compiler") = py::none());

  m.def("show_model", [](const fs::path& dir) { return forge::render_model(load_model(dir)); }, py::arg("project_dir"),
        "Render the package model of the project containing project_dir.");
  m.def("topo_order", [](const fs::path& dir) { return forge::topo_order(load_model(dir)); }, py::arg("project_dir"));

  m.def(
      "run",
      [](const std::vector<std::string>& args, const fs::path& cwd, std::optional<std::map<std::string, std::string>> env) {
        std::ostringstream out, err;
        forge::CliContext ctx{cwd, env ? *env : forge::process_environment(), out, err};
        int code;
        {
          py::gil_scoped_release release;
          code = forge::run_cli(args, ctx);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), py::arg("cwd"), py::arg("env") = py::none(),
      "Run the command line interface; returns (exit_code, stdout, stderr).");

  m.attr("__version__") = std::string(forge::kVersion);
}
