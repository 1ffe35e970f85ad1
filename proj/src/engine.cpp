#include "forge/engine.hpp"

#include "forge/digest.hpp"
#include "forge/error.hpp"
#include "forge/process.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>

namespace forge {

namespace fs = std::filesystem;

// --- cache -----------------------------------------------------------------

namespace {

constexpr std::string_view kCacheHeader = "forge-build-cache 1";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto tab = line.find('\t', pos);
    out.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
    if (tab == std::string::npos) break;
    pos = tab + 1;
  }
  return out;
}

}  // namespace

BuildCache BuildCache::load(const fs::path& file) {
  BuildCache cache;
  std::ifstream in(file);
  if (!in) return cache;
  std::string line;
  if (!std::getline(in, line) || line != kCacheHeader) return {};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 6 || (f[4] != "ok" && f[4] != "failed")) return {};
    cache.entries[f[0]] = CacheEntry{f[1], f[2], f[3], f[4] == "ok", f[5]};
  }
  return cache;
}

void BuildCache::save(const fs::path& file) const {
  const auto tmp = fs::path(file).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << kCacheHeader << '\n';
    for (const auto& [id, e] : entries)
      out << id << '\t' << e.source_digest << '\t' << e.deps_digest << '\t' << e.command_digest << '\t'
          << (e.success ? "ok" : "failed") << '\t' << e.output_digest << '\n';
    if (!out) throw BuildError(fmt::format("cannot write build cache {}", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw BuildError(fmt::format("cannot write build cache {}: {}", file.string(), ec.message()));
}

// --- planning --------------------------------------------------------------

namespace {

std::string digest_or_missing(const fs::path& p) {
  const auto d = digest_file(p);
  return d ? to_hex(*d) : "missing";
}

CacheEntry fingerprint(const BuildTarget& target, const ToolCommand& cmd) {
  CacheEntry e;
  e.source_digest = target.source ? to_hex(target.source->digest) : "-";

  Hasher deps;
  for (const auto& pre : target.prerequisites) deps.field(pre);
  deps.field("includes");
  if (target.source) {
    // inputs = source file followed by its includes.
    for (std::size_t i = 1; i < cmd.inputs.size(); ++i)
      deps.field(cmd.inputs[i].generic_string()).field(digest_or_missing(cmd.inputs[i]));
  }
  e.deps_digest = deps.hex();

  Hasher command;
  for (const auto& arg : cmd.argv) command.field(arg);
  e.command_digest = command.hex();
  return e;
}

bool outputs_present(const ToolCommand& cmd, const CompilerProfile& compiler) {
  std::error_code ec;
  if (!fs::exists(cmd.outputs.front(), ec)) return false;
  // Module file names are only predictable for these families.
  if (compiler.family == CompilerFamily::gfortran || compiler.family == CompilerFamily::mock) {
    for (const auto& m : cmd.module_files)
      if (!fs::exists(m, ec)) return false;
  }
  return true;
}

}  // namespace

BuildPlan plan_rebuild(const PackageModel& model, const std::vector<std::string>& order, const BuildCache& cache,
                       const BuildContext& context, const CompilerProfile& compiler,
                       const std::set<std::string>* only) {
  BuildPlan plan;
  plan.context = context;
  std::set<std::string> wanted;
  if (only) wanted = prerequisite_closure(model, *only);

  for (const auto& id : order) {
    if (only && !wanted.contains(id)) continue;
    const auto& target = model.targets.at(id);
    auto cmd = make_command(model, target, context, compiler);
    auto fp = fingerprint(target, cmd);

    bool dirty = false;
    auto it = cache.entries.find(id);
    if (it == cache.entries.end()) {
      dirty = true;
    } else {
      const auto& e = it->second;
      dirty = !e.success || e.source_digest != fp.source_digest || e.deps_digest != fp.deps_digest ||
              e.command_digest != fp.command_digest;
    }
    if (!dirty)
      dirty = std::any_of(target.prerequisites.begin(), target.prerequisites.end(),
                          [&](const std::string& pre) { return plan.dirty.contains(pre); });
    if (!dirty) dirty = !outputs_present(cmd, compiler);

    if (dirty) plan.dirty.insert(id);
    plan.order.push_back(id);
    plan.prerequisites[id] = target.prerequisites;
    plan.commands.emplace(id, std::move(cmd));
    plan.fingerprints.emplace(id, std::move(fp));
  }
  return plan;
}

// --- toolchains ------------------------------------------------------------

ProcessToolchain::ProcessToolchain(CompilerProfile compiler, fs::path working_dir)
    : compiler_(std::move(compiler)), working_dir_(std::move(working_dir)) {}

ToolResult ProcessToolchain::invoke(const ToolCommand& command) {
  auto r = run_capture(command.argv, working_dir_);
  return {r.exit_code, std::move(r.output)};
}

void ProcessToolchain::check_available(const BuildPlan& plan) const {
  std::set<std::string> needed;
  for (const auto& id : plan.dirty) needed.insert(plan.commands.at(id).argv.front());
  for (const auto& tool : needed) {
    if (find_program(tool).empty()) {
      if (tool == compiler_.executable)
        throw BuildError(fmt::format("compiler '{}' not found on PATH (set --compiler or FPM_COMPILER)", tool));
      throw BuildError(fmt::format("tool '{}' not found on PATH", tool));
    }
  }
}

MockToolchain::MockToolchain(fs::path log_file, std::set<std::string> failures)
    : log_file_(std::move(log_file)), failures_(std::move(failures)) {}

void MockToolchain::log(std::string_view event, const std::string& target, std::string_view status) {
  const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now().time_since_epoch())
                      .count();
  std::lock_guard lock(mutex_);
  std::ofstream out(log_file_, std::ios::app);
  out << event << ' ' << ns << ' ' << target;
  if (!status.empty()) out << ' ' << status;
  out << '\n';
}

namespace {

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw BuildError(fmt::format("cannot write {}", p.string()));
}

std::string input_digests(const ToolCommand& cmd) {
  std::string out;
  for (const auto& in : cmd.inputs) out += "# input " + digest_or_missing(in) + "\n";
  return out;
}

}  // namespace

ToolResult MockToolchain::invoke(const ToolCommand& command) {
  log("start", command.target_id);
  const bool fail = std::any_of(failures_.begin(), failures_.end(), [&](const std::string& f) {
    return command.target_id == f || command.target_id.ends_with("/" + f);
  });
  if (fail) {
    log("finish", command.target_id, "failed");
    return {1, fmt::format("mock: scripted failure for {}\n", command.target_id)};
  }

  std::string args;
  for (const auto& a : command.argv) args += " " + a;
  const auto& output = command.outputs.front();
  switch (command.kind) {
    case TargetKind::object:
      write_file(output, fmt::format("# forge mock object\n# command{}\n{}", args, input_digests(command)));
      for (const auto& m : command.module_files)
        write_file(m, fmt::format("# forge mock module interface {}\n", m.filename().string()));
      break;
    case TargetKind::archive:
      write_file(output, fmt::format("# forge mock archive\n# command{}\n{}", args, input_digests(command)));
      break;
    case TargetKind::executable: {
      const auto name = output.filename().string();
      write_file(output, fmt::format("#!/bin/sh\n# forge mock executable\n# command{}\n{}"
                                     "echo \"{} (mock build)\"\n"
                                     "for a in \"$@\"; do echo \"arg: $a\"; done\n"
                                     "exit 0\n",
                                     args, input_digests(command), name));
      fs::permissions(output, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                      fs::perm_options::add);
      break;
    }
  }
  log("finish", command.target_id, "ok");
  return {0, {}};
}

// --- execution -------------------------------------------------------------

namespace {

struct Completion {
  std::string id;
  ToolResult result;
  std::string output_digest;
};

// Fixed worker pool fed by the scheduler thread.
class WorkerPool {
 public:
  WorkerPool(int workers, Toolchain& toolchain) : toolchain_(toolchain) {
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
  }

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    jobs_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void submit(const ToolCommand* cmd) {
    {
      std::lock_guard lock(mutex_);
      jobs_.push_back(cmd);
    }
    jobs_cv_.notify_one();
  }

  Completion wait() {
    std::unique_lock lock(mutex_);
    done_cv_.wait(lock, [this] { return !done_.empty(); });
    auto c = std::move(done_.front());
    done_.pop_front();
    return c;
  }

 private:
  void loop() {
    while (true) {
      const ToolCommand* cmd = nullptr;
      {
        std::unique_lock lock(mutex_);
        jobs_cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
        if (jobs_.empty()) return;
        cmd = jobs_.front();
        jobs_.pop_front();
      }
      auto c = run(*cmd);
      {
        std::lock_guard lock(mutex_);
        done_.push_back(std::move(c));
      }
      done_cv_.notify_one();
    }
  }

  Completion run(const ToolCommand& cmd) {
    Completion c{cmd.target_id, {}, {}};
    try {
      std::error_code ec;
      for (const auto& out : cmd.outputs) fs::create_directories(out.parent_path(), ec);
      for (const auto& m : cmd.module_files) fs::create_directories(m.parent_path(), ec);
      if (cmd.kind == TargetKind::archive) fs::remove(cmd.outputs.front(), ec);
      c.result = toolchain_.invoke(cmd);
      if (c.result.exit_code == 0) {
        const auto d = digest_file(cmd.outputs.front());
        if (d) {
          c.output_digest = to_hex(*d);
        } else {
          c.result.exit_code = 1;
          c.result.output += fmt::format("expected output {} was not produced\n", cmd.outputs.front().string());
        }
      }
    } catch (const std::exception& e) {
      c.result = {1, e.what()};
    }
    return c;
  }

  Toolchain& toolchain_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable jobs_cv_;
  std::condition_variable done_cv_;
  std::deque<const ToolCommand*> jobs_;
  std::deque<Completion> done_;
  bool stopping_ = false;
};

}  // namespace

BuildReport execute(const BuildPlan& plan, int workers, Toolchain& toolchain, BuildCache& cache) {
  if (workers < 1) throw BuildError("the number of workers must be at least 1");
  BuildReport report;
  if (plan.dirty.empty()) return report;

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < plan.order.size(); ++i) position[plan.order[i]] = i;
  auto by_position = [&](const std::string& a, const std::string& b) { return position.at(a) < position.at(b); };

  std::map<std::string, std::size_t> waiting;
  std::map<std::string, std::vector<std::string>> dependents;
  std::set<std::string, decltype(by_position)> ready(by_position);
  for (const auto& id : plan.dirty) {
    std::size_t n = 0;
    for (const auto& pre : plan.prerequisites.at(id)) {
      if (plan.dirty.contains(pre)) {
        ++n;
        dependents[pre].push_back(id);
      }
    }
    waiting[id] = n;
    if (n == 0) ready.insert(id);
  }

  std::set<std::string> finished;
  WorkerPool pool(std::min<int>(workers, static_cast<int>(plan.dirty.size())), toolchain);
  int in_flight = 0;
  while (in_flight > 0 || !ready.empty()) {
    while (in_flight < workers && !ready.empty()) {
      const auto id = *ready.begin();
      ready.erase(ready.begin());
      pool.submit(&plan.commands.at(id));
      ++in_flight;
      ++report.invocations;
    }
    auto done = pool.wait();
    --in_flight;
    finished.insert(done.id);

    auto entry = plan.fingerprints.at(done.id);
    if (done.result.exit_code == 0) {
      entry.success = true;
      entry.output_digest = done.output_digest;
      report.built.push_back(done.id);
      if (!done.result.output.empty()) report.diagnostics[done.id] = done.result.output;
      for (const auto& dep : dependents[done.id])
        if (--waiting[dep] == 0) ready.insert(dep);
    } else {
      entry.success = false;
      entry.output_digest = "-";
      report.failed.push_back(done.id);
      report.diagnostics[done.id] = done.result.output;
    }
    cache.entries[done.id] = std::move(entry);
  }

  for (const auto& id : plan.order) {
    if (plan.dirty.contains(id) && !finished.contains(id)) {
      report.skipped.push_back(id);
      cache.entries.erase(id);
    }
  }
  std::sort(report.built.begin(), report.built.end());
  std::sort(report.failed.begin(), report.failed.end());
  std::sort(report.skipped.begin(), report.skipped.end());
  return report;
}

BuildReport run_build(const BuildRequest& request, Toolchain& toolchain) {
  const auto& model = *request.model;
  const auto& dir = request.context.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw BuildError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  FileLock lock(dir / ".lock", /*blocking=*/false);

  const auto cache_file = dir / kCacheFile;
  auto cache = BuildCache::load(cache_file);
  for (auto it = cache.entries.begin(); it != cache.entries.end();) {
    it = model.targets.contains(it->first) ? std::next(it) : cache.entries.erase(it);
  }

  const auto order = topo_order(model);
  const auto plan = plan_rebuild(model, order, cache, request.context, request.compiler,
                                 request.only ? &*request.only : nullptr);
  if (!plan.dirty.empty()) toolchain.check_available(plan);
  auto report = execute(plan, request.workers, toolchain, cache);
  cache.save(cache_file);
  return report;
}

}  // namespace forge
