#include "support.hpp"

#include "forge/engine.hpp"
#include "forge/error.hpp"

#include <doctest.h>

using namespace forge;
using namespace forge::testing;

namespace {

using Ids = std::set<std::string>;
using Flags = std::vector<std::string>;

CompilerProfile mock() { return detect_toolchain(std::string(kMockCompiler), {}); }

const Flags kDebug{"-Wall",      "-Wextra",         "-Wimplicit-interface", "-fPIC",       "-fmax-errors=1",
                   "-g",         "-fcheck=bounds",  "-fcheck=array-temps",  "-fbacktrace", "-ffpe-trap=invalid,zero,overflow"};
const Flags kRelease{"-O3", "-Wimplicit-interface", "-fPIC", "-fmax-errors=1", "-funroll-loops"};

struct Fixture {
  TempDir dir;
  fs::path root = dir / "proj";
  fs::path out = dir / "proj/build/mock";
  fs::path log = dir / "mock.log";

  PackageModel load() { return load_project(root, dir / "cache").model; }

  BuildReport build(const PackageModel& m, int workers = 1, std::set<std::string> failures = {}) {
    fs::remove(log);
    return mock_build(m, root, out, workers, log, std::move(failures));
  }
  Ids started() const { return fs::exists(log) ? started_targets(read_mock_log(log)) : Ids{}; }
};

}  // namespace

TEST_CASE("effective_flags rules") {
  const auto gf = detect_toolchain(std::nullopt, {});
  CHECK(effective_flags(std::nullopt, std::nullopt, gf) == kDebug);
  CHECK(effective_flags(std::string("release"), std::nullopt, gf) == kRelease);
  CHECK(effective_flags(std::string("debug"), std::nullopt, gf) == kDebug);
  auto with_extra = kRelease;
  with_extra.push_back("-ffast-math");
  CHECK(effective_flags(std::string("release"), std::string("-ffast-math"), gf) == with_extra);
  CHECK(effective_flags(std::nullopt, std::string("-O1"), gf) == Flags{"-O1"});
  CHECK(effective_flags(std::nullopt, std::string("-O1  -g '-DX=a b'"), gf) == Flags{"-O1", "-g", "-DX=a b"});
  CHECK_THROWS_AS(effective_flags(std::string("fast"), std::nullopt, gf), UsageError);
}

TEST_CASE("detect_toolchain precedence") {
  CHECK(detect_toolchain(std::nullopt, {}).executable == "gfortran");
  CHECK(detect_toolchain(std::nullopt, {}).family == CompilerFamily::gfortran);
  CHECK(detect_toolchain(std::string("ifort"), {{"FPM_COMPILER", "gfortran"}}).executable == "ifort");
  CHECK(detect_toolchain(std::string("ifort"), {}).family == CompilerFamily::intel);
  CHECK(detect_toolchain(std::nullopt, {{"FPM_COMPILER", "MOCK"}}).family == CompilerFamily::mock);
  CHECK(detect_toolchain(std::nullopt, {{"FPM_COMPILER", "/opt/bin/gfortran-13"}}).family == CompilerFamily::gfortran);
  CHECK(detect_toolchain(std::nullopt, {{"FPM_COMPILER", "flang-new"}}).module_output_flag ==
        Flags{"-module-dir", "{dir}"});
  const auto generic = detect_toolchain(std::string("xlf"), {});
  CHECK(generic.family == CompilerFamily::generic);
  CHECK(generic.profiles.at("debug") == Flags{"-g"});
  CHECK(generic.profiles.at("release") == Flags{"-O2"});
}

TEST_CASE("output_dir separation") {
  const auto gf = detect_toolchain(std::nullopt, {});
  const fs::path root = "/p";
  const auto debug = output_dir(root, effective_flags(std::nullopt, std::nullopt, gf), gf);
  CHECK(debug == output_dir(root, effective_flags(std::nullopt, std::nullopt, gf), gf));
  CHECK(debug.parent_path() == "/p/build");
  CHECK(debug.filename().string().rfind("gfortran_", 0) == 0);
  CHECK(debug != output_dir(root, effective_flags(std::string("release"), std::nullopt, gf), gf));
  CHECK(debug != output_dir(root, effective_flags(std::string("debug"), std::string("-O2"), gf), gf));
  CHECK(debug != output_dir(root, effective_flags(std::nullopt, std::nullopt, gf), mock()));
}

TEST_CASE("compile, archive and link commands") {
  auto root = memory_root("pkg", "/w");
  root.manifest.build.link = {"lapack", "blas"};
  std::vector<SourceInfo> sources{scan_fortran("src/m1.f90", "module m1\nend module\n"),
                                  scan_c("src/util.c", ""),
                                  scan_fortran("app/main.f90", "program main\nuse m1\nend program\n")};
  const auto model = build_model(root.manifest, {root}, {{"pkg", sources}});
  const auto gf = detect_toolchain(std::nullopt, {});
  BuildContext ctx{"/w", "/w/build/x", {"-g"}, {"-O0"}};

  auto cmd = make_command(model, model.targets.at("obj/pkg/src/m1.f90"), ctx, gf);
  CHECK(cmd.argv == Flags{"gfortran", "-g", "-c", "src/m1.f90", "-J", "build/x/mod/pkg", "-Ibuild/x/mod/pkg", "-o",
                          "build/x/o/pkg/src/m1.f90.o"});
  CHECK(cmd.module_files == std::vector<fs::path>{"/w/build/x/mod/pkg/m1.mod"});

  cmd = make_command(model, model.targets.at("obj/pkg/src/util.c"), ctx, gf);
  CHECK(cmd.uses_c_compiler);
  CHECK(cmd.argv == Flags{"gcc", "-O0", "-c", "src/util.c", "-o", "build/x/o/pkg/src/util.c.o"});

  cmd = make_command(model, model.targets.at("lib/pkg"), ctx, gf);
  CHECK(cmd.argv == Flags{"ar", "rcs", "build/x/lib/libpkg.a", "build/x/o/pkg/src/m1.f90.o", "build/x/o/pkg/src/util.c.o"});

  cmd = make_command(model, model.targets.at("exe/app/pkg"), ctx, gf);
  REQUIRE(cmd.argv.size() >= 2);
  CHECK(Flags(cmd.argv.end() - 2, cmd.argv.end()) == Flags{"-llapack", "-lblas"});
  CHECK(std::find(cmd.argv.begin(), cmd.argv.end(), "build/x/lib/libpkg.a") != cmd.argv.end());
}

TEST_CASE("incremental planning") {
  Fixture f;
  write_chain_project(f.root, 4);
  auto model = f.load();
  auto report = f.build(model);
  CHECK(report.ok());
  CHECK(report.built.size() == model.targets.size());
  CHECK(fs::exists(f.out / "app/chain"));
  CHECK(fs::exists(f.out / "mod/chain/c3.mod"));
  CHECK(fs::exists(f.out / "lib/libchain.a"));

  SUBCASE("untouched rebuild invokes nothing") {
    report = f.build(model);
    CHECK(report.up_to_date());
    CHECK_FALSE(fs::exists(f.log));
  }
  SUBCASE("editing the main program leaves the library alone") {
    write_file(f.root / "app/main.f90", "program main\n  use c3\n  print *, 1\nend program main\n");
    model = f.load();
    f.build(model);
    CHECK(f.started() == Ids{"obj/chain/app/main.f90", "exe/app/chain"});
  }
  SUBCASE("editing the leaf module rebuilds every dependent") {
    write_file(f.root / "src/c0.f90", "module c0\n  integer :: changed\nend module c0\n");
    model = f.load();
    f.build(model);
    CHECK(f.started() == brute_force_dependents(model, {"obj/chain/src/c0.f90"}));
    CHECK(f.started().size() == model.targets.size());
  }
  SUBCASE("a deleted output is rebuilt") {
    fs::remove(f.out / "o/chain/src/c2.f90.o");
    f.build(model);
    CHECK(f.started() == brute_force_dependents(model, {"obj/chain/src/c2.f90"}));
  }
  SUBCASE("a corrupt cache degrades to a full rebuild") {
    write_file(f.out / std::string(kCacheFile), "garbage\n");
    f.build(model);
    CHECK(f.started().size() == model.targets.size());
  }
}

TEST_CASE("include edits trigger rebuilds") {
  Fixture f;
  write_file(f.root / "fpm.toml", "name = \"inc\"\n");
  write_file(f.root / "src/a.f90", "module a\ninclude 'a.inc'\nend module a\n");
  write_file(f.root / "src/a.inc", "integer :: x\n");
  write_file(f.root / "src/b.f90", "module b\nend module b\n");
  auto model = f.load();
  f.build(model);
  write_file(f.root / "src/a.inc", "integer :: y\n");
  model = f.load();
  f.build(model);
  CHECK(f.started() == Ids{"obj/inc/src/a.f90", "lib/inc"});
}

TEST_CASE("failures skip dependents and keep independent work") {
  Fixture f;
  write_wide_project(f.root);
  const auto model = f.load();
  const auto report = f.build(model, 4, {"obj/wide/src/a5.f90"});
  CHECK(report.failed == std::vector<std::string>{"obj/wide/src/a5.f90"});
  const auto dependents = brute_force_dependents(model, {"obj/wide/src/a5.f90"});
  CHECK(Ids(report.skipped.begin(), report.skipped.end()) == [&] {
    auto d = dependents;
    d.erase("obj/wide/src/a5.f90");
    return d;
  }());
  for (int i = 0; i < 12; ++i) CHECK(fs::exists(f.out / ("o/wide/src/b" + std::to_string(i) + ".f90.o")));
  CHECK(report.diagnostics.count("obj/wide/src/a5.f90"));

  // The failed unit and its dependents are retried next time, nothing else.
  const auto again = f.build(model, 4);
  CHECK(again.ok());
  CHECK(f.started() == dependents);
}

TEST_CASE("no target starts before its prerequisites finish") {
  Fixture f;
  write_wide_project(f.root);
  const auto model = f.load();
  f.build(model, 8);
  std::map<std::string, long long> start, finish;
  for (const auto& e : read_mock_log(f.log)) (e.event == "start" ? start : finish)[e.target] = e.ns;
  CHECK(start.size() == model.targets.size());
  for (const auto& [id, t] : model.targets)
    for (const auto& p : t.prerequisites) CHECK(finish.at(p) <= start.at(id));
}

TEST_CASE("serial and parallel builds agree") {
  Fixture serial, parallel;
  write_wide_project(serial.root);
  write_wide_project(parallel.root);
  const auto m1 = serial.load();
  const auto m8 = parallel.load();
  REQUIRE(m1.targets.size() >= 30);
  CHECK(serial.build(m1, 1).ok());
  CHECK(parallel.build(m8, 8).ok());
  CHECK(artifact_digests(serial.out) == artifact_digests(parallel.out));
  CHECK(read_file(serial.out / std::string(kCacheFile)) == read_file(parallel.out / std::string(kCacheFile)));
}

TEST_CASE("build cache file round trip") {
  TempDir dir;
  BuildCache c;
  c.entries["obj/a"] = {"1", "2", "3", true, "4"};
  c.entries["exe/app/x y"] = {"a", "b", "c", false, ""};
  c.save(dir / "c.txt");
  CHECK(read_file(dir / "c.txt").rfind("forge-build-cache 1\n", 0) == 0);
  CHECK(BuildCache::load(dir / "c.txt") == c);
  CHECK(BuildCache::load(dir / "missing.txt").entries.empty());
  write_file(dir / "bad.txt", "forge-build-cache 1\nonly\tthree\tfields\n");
  CHECK(BuildCache::load(dir / "bad.txt").entries.empty());
}

TEST_CASE("output directory lock") {
  TempDir dir;
  FileLock first(dir / ".lock", false);
  try {
    FileLock second(dir / ".lock", false);
    FAIL("second lock acquired");
  } catch (const BuildError& e) {
    CHECK(std::string(e.what()).find("locked") != std::string::npos);
  }
}

TEST_CASE("missing compiler is reported when building") {
  Fixture f;
  write_chain_project(f.root, 1);
  const auto model = f.load();
  auto compiler = detect_toolchain(std::string("definitely-not-a-compiler-xyz"), {});
  BuildContext ctx{f.root, f.out, {"-g"}, {}};
  ProcessToolchain tc(compiler, f.root);
  BuildRequest req{&model, ctx, compiler, 1, std::nullopt};
  CHECK_THROWS_AS(run_build(req, tc), BuildError);
}

TEST_CASE("split_flags") {
  CHECK(split_flags("") == Flags{});
  CHECK(split_flags("  -a\t-b  ") == Flags{"-a", "-b"});
  CHECK(split_flags("-D\"x y\" ''") == Flags{"-Dx y", ""});
}
