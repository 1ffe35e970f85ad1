#include "forge/cli.hpp"

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  forge::CliContext ctx{std::filesystem::current_path(), forge::process_environment(), std::cout, std::cerr};
  return forge::run_cli(args, ctx);
}
