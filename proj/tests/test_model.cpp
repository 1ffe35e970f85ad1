#include "support.hpp"

#include "forge/error.hpp"
#include "forge/model.hpp"

#include <doctest.h>

using namespace forge;
using namespace forge::testing;

namespace {

using Ids = std::set<std::string>;

PackageModel model_of(const std::map<std::string, std::string>& files, Manifest manifest = default_manifest("pkg")) {
  auto root = memory_root(manifest.name);
  root.manifest = manifest;
  return build_model(manifest, {root}, {{manifest.name, scan_memory(files)}});
}

std::string model_error(const std::map<std::string, std::string>& files, Manifest manifest = default_manifest("pkg")) {
  try {
    model_of(files, std::move(manifest));
  } catch (const ModelError& e) {
    return e.what();
  }
  return "<no error>";
}

ResolvedPackage path_package(const std::string& name, std::vector<std::string> deps = {}) {
  ResolvedPackage p;
  p.name = name;
  p.origin = PathOrigin{name};
  p.local_dir = "/nonexistent/" + name;
  p.manifest = default_manifest(name);
  p.depends_on = std::move(deps);
  return p;
}

}  // namespace

TEST_CASE("three file model") {
  const auto m = model_of({{"src/m1.f90", "module m1\nend module\n"},
                           {"src/m2.f90", "module m2\nuse m1\nend module\n"},
                           {"app/main.f90", "program main\nuse m2\nend program\n"}});
  CHECK(m.targets.size() == 5);
  CHECK(m.targets.at("obj/pkg/src/m1.f90").prerequisites.empty());
  CHECK(m.targets.at("obj/pkg/src/m2.f90").prerequisites == Ids{"obj/pkg/src/m1.f90"});
  CHECK(m.targets.at("lib/pkg").prerequisites == Ids{"obj/pkg/src/m1.f90", "obj/pkg/src/m2.f90"});
  CHECK(m.targets.at("lib/pkg").kind == TargetKind::archive);
  const auto& exe = m.targets.at("exe/app/pkg");
  CHECK(exe.kind == TargetKind::executable);
  CHECK(exe.prerequisites == Ids{"obj/pkg/app/main.f90", "lib/pkg"});
  CHECK(exe.main_object == "obj/pkg/app/main.f90");
  CHECK(m.targets.at("obj/pkg/app/main.f90").prerequisites == Ids{"obj/pkg/src/m2.f90"});
  CHECK(exe.output_name == "app/pkg");
  CHECK(m.module_index.at("m1") == "obj/pkg/src/m1.f90");
}

TEST_CASE("duplicate module names both files") {
  const auto e = model_error({{"src/a.f90", "module util\nend module\n"}, {"src/b.f90", "module util\nend module\n"}});
  CHECK(e.find("duplicate module 'util'") != std::string::npos);
  CHECK(e.find("src/a.f90") != std::string::npos);
  CHECK(e.find("src/b.f90") != std::string::npos);
}

TEST_CASE("external modules satisfy uses without edges") {
  auto manifest = default_manifest("pkg");
  const auto err = model_error({{"src/a.f90", "module a\nuse mpi\nend module\n"}}, manifest);
  CHECK(err.find("unresolved module 'mpi' used by pkg:src/a.f90") != std::string::npos);
  CHECK(err.find("external-modules") != std::string::npos);

  manifest.build.external_modules = {"mpi"};
  const auto m = model_of({{"src/a.f90", "module a\nuse mpi\nend module\n"}}, manifest);
  CHECK(m.targets.at("obj/pkg/src/a.f90").prerequisites.empty());
  CHECK(m.external_modules == std::set<std::string>{"mpi"});
}

TEST_CASE("module dependency cycle reports the path") {
  const auto e = model_error({{"src/a.f90", "module a\nuse b\nend module\n"},
                              {"src/b.f90", "module b\nuse c\nend module\n"},
                              {"src/c.f90", "module c\nuse a\nend module\n"}});
  CHECK(e.find("cycle") != std::string::npos);
  CHECK(e.find("a -> b -> c -> a") != std::string::npos);
}

TEST_CASE("topo_order chain and tie break") {
  const auto chain = model_of({{"src/c.f90", "module c\nuse b\nend module\n"},
                               {"src/a.f90", "module a\nend module\n"},
                               {"src/b.f90", "module b\nuse a\nend module\n"}});
  const auto order = topo_order(chain);
  CHECK(order == std::vector<std::string>{"obj/pkg/src/a.f90", "obj/pkg/src/b.f90", "obj/pkg/src/c.f90", "lib/pkg"});

  const auto indep = model_of({{"src/y.f90", "module y\nend module\n"}, {"src/x.f90", "module x\nend module\n"}});
  CHECK(topo_order(indep) == std::vector<std::string>{"obj/pkg/src/x.f90", "obj/pkg/src/y.f90", "lib/pkg"});
}

TEST_CASE("submodule depends on its parent module") {
  const auto m = model_of({{"src/p.f90", "module p\ninterface\nmodule subroutine s()\nend subroutine\nend interface\nend module\n"},
                           {"src/p_impl.f90", "submodule (p) p_impl\ncontains\nmodule procedure s\nend procedure\nend submodule\n"},
                           {"src/q_impl.f90", "submodule (p:p_impl) q_impl\nend submodule\n"}});
  CHECK(m.targets.at("obj/pkg/src/p_impl.f90").prerequisites.count("obj/pkg/src/p.f90"));
  CHECK(m.targets.at("obj/pkg/src/q_impl.f90").prerequisites.count("obj/pkg/src/p.f90"));
}

TEST_CASE("C sources join the archive") {
  auto root = memory_root("pkg");
  std::vector<SourceInfo> sources{scan_c("src/util.c", "#include \"util.h\"\n"), scan_c("src/util.h", ""),
                                  scan_fortran("src/a.f90", "module a\nend module\n")};
  const auto m = build_model(root.manifest, {root}, {{"pkg", sources}});
  CHECK(m.targets.count("obj/pkg/src/util.c"));
  CHECK_FALSE(m.targets.count("obj/pkg/src/util.h"));
  CHECK(m.targets.at("lib/pkg").prerequisites.count("obj/pkg/src/util.c"));
}

TEST_CASE("dependency packages: archives, link order, render") {
  auto root = memory_root("app");
  root.manifest.build.link = {"lapack", "blas"};
  root.manifest.dependencies["mid"] = {"mid", PathOrigin{"mid"}};
  root.depends_on = {"mid"};
  auto mid = path_package("mid", {"base"});
  mid.manifest.build.link = {"blas"};
  auto base = path_package("base");
  SourcesByPackage sources{
      {"base", {scan_fortran("src/base.f90", "module base\nend module\n")}},
      {"mid", {scan_fortran("src/mid.f90", "module mid\nuse base\nend module\n")}},
      {"app", {scan_fortran("src/core.f90", "module core\nuse mid\nend module\n"),
               scan_fortran("app/main.f90", "program main\nuse core\nend program\n")}}};
  const auto m = build_model(root.manifest, {base, mid, root}, sources);
  const auto& exe = m.targets.at("exe/app/app");
  CHECK(exe.link_archives == std::vector<std::string>{"lib/app", "lib/mid", "lib/base"});
  CHECK(exe.link_libraries == std::vector<std::string>{"lapack", "blas"});
  CHECK(m.targets.at("obj/mid/src/mid.f90").prerequisites == Ids{"obj/base/src/base.f90"});

  // Package list order and input order do not matter.
  const auto again = build_model(root.manifest, {mid, root, base}, sources);
  CHECK(again == m);
  const auto dump = render_model(m);
  CHECK(dump == render_model(again));
  CHECK(dump.find("package base") < dump.find("package mid"));
  CHECK(dump.find("package mid") < dump.find("package app"));
}

TEST_CASE("dependency cannot use modules of its dependents") {
  auto root = memory_root("app");
  root.depends_on = {"dep"};
  auto dep = path_package("dep");
  SourcesByPackage sources{{"dep", {scan_fortran("src/d.f90", "module d\nuse r\nend module\n")}},
                           {"app", {scan_fortran("src/r.f90", "module r\nend module\n")}}};
  CHECK_THROWS_AS(build_model(root.manifest, {dep, root}, sources), ModelError);
}

TEST_CASE("declared executables override discovery") {
  auto manifest = default_manifest("pkg");
  manifest.executables = {{"tool", "app", "main.f90"}};
  const auto m = model_of({{"app/main.f90", "program main\nend program\n"},
                           {"app/other.f90", "program other\nend program\n"},
                           {"app/helpers.f90", "module helpers\nend module\n"}},
                          manifest);
  CHECK(m.targets.count("exe/app/tool"));
  CHECK_FALSE(m.targets.count("exe/app/pkg"));
  CHECK(m.targets.count("exe/app/other"));
  CHECK(m.targets.at("exe/app/tool").prerequisites.count("obj/pkg/app/helpers.f90"));

  manifest.build.auto_executables = false;
  const auto only = model_of({{"app/main.f90", "program main\nend program\n"},
                              {"app/other.f90", "program other\nend program\n"}},
                             manifest);
  CHECK(only.executables(ExecutableRole::app).size() == 1);
}

TEST_CASE("missing declared main is an error") {
  auto manifest = default_manifest("pkg");
  manifest.tests = {{"unit", "test", "absent.f90"}};
  CHECK(model_error({{"src/a.f90", "module a\nend module\n"}}, manifest).find("test/absent.f90") != std::string::npos);
}

TEST_CASE("tests and examples get their own roles") {
  const auto m = model_of({{"src/a.f90", "module a\nend module\n"},
                           {"test/check.f90", "program check\nuse a\nend program\n"},
                           {"example/demo.f90", "program demo\nend program\n"}});
  CHECK(m.targets.at("exe/test/check").output_name == "test/check");
  CHECK(m.targets.at("exe/example/demo").output_name == "example/demo");
  CHECK(m.executables(ExecutableRole::test).size() == 1);
}

TEST_CASE("dev dependencies link only into tests") {
  auto root = memory_root("app");
  root.manifest.dev_dependencies["tester"] = {"tester", PathOrigin{"tester"}};
  root.depends_on = {"tester"};
  auto tester = path_package("tester");
  SourcesByPackage sources{{"tester", {scan_fortran("src/t.f90", "module t\nend module\n")}},
                           {"app", {scan_fortran("app/main.f90", "program main\nend program\n"),
                                    scan_fortran("test/check.f90", "program check\nuse t\nend program\n")}}};
  const auto m = build_model(root.manifest, {tester, root}, sources);
  CHECK(m.targets.at("exe/test/check").link_archives == std::vector<std::string>{"lib/tester"});
  CHECK(m.targets.at("exe/app/app").link_archives.empty());
}

TEST_CASE("render_model format") {
  const auto m = model_of({{"src/m.f90", "module m\nend module\n"}});
  const auto dump = render_model(m);
  CHECK(dump == render_model(m));
  CHECK(dump.rfind("model pkg\n", 0) == 0);
  CHECK(dump.find("  target obj/pkg/src/m.f90\n    kind object\n") != std::string::npos);
  CHECK(dump.find("  target lib/pkg\n    kind archive\n") != std::string::npos);
  CHECK(dump.find("    output lib/libpkg.a\n") != std::string::npos);
}

TEST_CASE("property: random DAG order validity and permutation insensitivity") {
  Rng rng(2024);
  for (int iter = 0; iter < 60; ++iter) {
    const auto dag = random_dag(rng, uniform(rng, 1, 40), 0.15);
    const auto root = memory_root("pkg");
    auto sources = scan_memory(dag.files);
    const auto m = build_model(root.manifest, {root}, {{"pkg", sources}});
    const auto order = topo_order(m);
    REQUIRE(order_respects_prerequisites(m, order));
    std::shuffle(sources.begin(), sources.end(), rng);
    const auto m2 = build_model(root.manifest, {root}, {{"pkg", sources}});
    CHECK(m2 == m);
    CHECK(render_model(m2) == render_model(m));
    CHECK(topo_order(m2) == order);

    // Every module reachable from the program is in the executable's closure.
    const auto closure = prerequisite_closure(m, {"exe/app/pkg"});
    std::set<std::string> reach;
    std::vector<std::string> stack(m.targets.at("obj/pkg/app/main.f90").source->uses.begin(),
                                   m.targets.at("obj/pkg/app/main.f90").source->uses.end());
    while (!stack.empty()) {
      const auto name = stack.back();
      stack.pop_back();
      if (!reach.insert(name).second) continue;
      for (const auto& u : dag.uses.at(name)) stack.push_back(u);
    }
    for (const auto& name : reach) CHECK(closure.count("obj/pkg/src/" + name + ".f90"));
  }
}
