#include "forge/cli.hpp"
#include "forge/error.hpp"
#include "forge/manifest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>

namespace forge {

namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(fmt::format("cannot write {}", p.string()));
}

std::string fortran_name(std::string name) {
  std::replace(name.begin(), name.end(), '-', '_');
  return name;
}

}  // namespace

fs::path create_package(const std::string& name, const fs::path& parent) {
  // Validates the name before anything touches the filesystem.
  const auto manifest = default_manifest(name);
  const auto target = parent / name;
  std::error_code ec;
  if (fs::exists(target, ec)) throw UsageError(fmt::format("{} already exists", target.string()));

  const auto staging = parent / fmt::format(".{}.new", name);
  fs::remove_all(staging, ec);
  const auto mod = fortran_name(name);
  try {
    write(staging / kManifestFile, manifest_template(name));
    write(staging / "src" / (name + ".f90"), fmt::format(R"(module {0}
  implicit none
  private

  public :: say_hello
contains
  subroutine say_hello
    print *, "Hello, {1}!"
  end subroutine say_hello
end module {0}
)",
                                                         mod, name));
    write(staging / "app" / "main.f90", fmt::format(R"(program main
  use {0}, only: say_hello
  implicit none

  call say_hello()
end program main
)",
                                                    mod));
    write(staging / "test" / "check.f90", R"(program check
  implicit none

  print *, "Put some tests in here!"
end program check
)");
    write(staging / "README.md", fmt::format("# {}\n\nA Fortran package. Build it with `fpm build`, run it with "
                                             "`fpm run` and test it with `fpm test`.\n",
                                             name));
    write(staging / ".gitignore", "build/*\n");
    fs::rename(staging, target);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  return target;
}

}  // namespace forge
