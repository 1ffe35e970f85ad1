#include "forge/process.hpp"

#include "forge/error.hpp"

#include <fmt/format.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <ostream>

#include <fcntl.h>
#include <spawn.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace forge {

namespace fs = std::filesystem;

namespace {

// Owns the argv/envp arrays handed to posix_spawnp.
struct SpawnArgs {
  std::vector<std::string> env_storage;
  std::vector<char*> argv;
  std::vector<char*> envp;

  SpawnArgs(const std::vector<std::string>& args, const EnvOverrides& env) {
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    for (char** e = environ; *e; ++e) {
      const std::string_view entry(*e);
      const auto key = entry.substr(0, entry.find('='));
      if (!env.contains(std::string(key))) env_storage.emplace_back(entry);
    }
    for (const auto& [k, v] : env) env_storage.push_back(k + "=" + v);
    for (auto& e : env_storage) envp.push_back(e.data());
    envp.push_back(nullptr);
  }
};

int decode_status(int status) {
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 1;
}

// Spawns with stdout+stderr redirected into a pipe and feeds each chunk to
// sink. Returns the exit code.
template <typename Sink>
int spawn_piped(const std::vector<std::string>& argv, const fs::path& cwd, const EnvOverrides& env, Sink&& sink) {
  if (argv.empty()) throw BuildError("empty command line");
  int fds[2];
  if (pipe2(fds, O_CLOEXEC) != 0) throw BuildError(fmt::format("pipe failed: {}", std::strerror(errno)));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDERR_FILENO);
  if (!cwd.empty()) posix_spawn_file_actions_addchdir_np(&actions, cwd.c_str());

  SpawnArgs args(argv, env);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0].c_str(), &actions, nullptr, args.argv.data(), args.envp.data());
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);
  if (rc != 0) {
    close(fds[0]);
    sink(fmt::format("cannot execute '{}': {}\n", argv[0], std::strerror(rc)));
    return 127;
  }

  char buf[4096];
  while (true) {
    const ssize_t n = read(fds[0], buf, sizeof buf);
    if (n > 0) {
      sink(std::string_view(buf, static_cast<std::size_t>(n)));
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    break;
  }
  close(fds[0]);

  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return 1;
  }
  return decode_status(status);
}

}  // namespace

ProcessResult run_capture(const std::vector<std::string>& argv, const fs::path& cwd, const EnvOverrides& env) {
  ProcessResult result;
  result.exit_code = spawn_piped(argv, cwd, env, [&](std::string_view chunk) { result.output += chunk; });
  return result;
}

int run_streaming(const std::vector<std::string>& argv, const fs::path& cwd, std::ostream& sink) {
  return spawn_piped(argv, cwd, {}, [&](std::string_view chunk) {
    sink.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    sink.flush();
  });
}

fs::path find_program(const std::string& name) {
  if (name.empty()) return {};
  if (name.find('/') != std::string::npos) {
    const fs::path p(name);
    return access(p.c_str(), X_OK) == 0 ? p : fs::path{};
  }
  const char* path_env = std::getenv("PATH");
  std::string_view path = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  while (true) {
    const auto colon = path.find(':');
    const auto dir = path.substr(0, colon);
    const auto candidate = fs::path(dir.empty() ? "." : std::string(dir)) / name;
    if (access(candidate.c_str(), X_OK) == 0 && !fs::is_directory(candidate)) return candidate;
    if (colon == std::string_view::npos) break;
    path.remove_prefix(colon + 1);
  }
  return {};
}

FileLock::FileLock(const fs::path& path, bool blocking) {
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw BuildError(fmt::format("cannot open lock file {}: {}", path.string(), std::strerror(errno)));
  int rc;
  do {
    rc = flock(fd_, LOCK_EX | (blocking ? 0 : LOCK_NB));
  } while (rc != 0 && errno == EINTR);
  if (rc != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    if (err == EWOULDBLOCK)
      throw BuildError(fmt::format("{} is locked by another running build", path.parent_path().string()));
    throw BuildError(fmt::format("cannot lock {}: {}", path.string(), std::strerror(err)));
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace forge
