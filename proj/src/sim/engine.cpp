// SPDX-License-Identifier: Apache-2.0
#include "amsizer/sim.hpp"

#include <chrono>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

extern char** environ;

namespace amsizer {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct SpawnResult {
  bool timed_out = false;
  int exit_code = -1;
  std::string error;
};

/// Runs argv with stdout/stderr appended to `output`, killing the whole
/// process group after `timeout` seconds.
SpawnResult spawn_and_wait(const std::vector<std::string>& args, const fs::path& output, double timeout) {
  SpawnResult res;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, output.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e)
    if (!std::string_view(*e).starts_with("SPICE_ASCIIRAWFILE="))
      env.emplace_back(*e);
  env.emplace_back("SPICE_ASCIIRAWFILE=1");
  std::vector<char*> envp;
  for (auto& s : env)
    envp.push_back(s.data());
  envp.push_back(nullptr);

  std::vector<std::string> argv_store = args;
  std::vector<char*> argv;
  for (auto& s : argv_store)
    argv.push_back(s.data());
  argv.push_back(nullptr);

  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) {
    res.error = fmt::format("cannot start '{}': {}", args.front(), std::strerror(rc));
    return res;
  }

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout);
  int status = 0;
  while (true) {
    const pid_t w = waitpid(pid, &status, WNOHANG);
    if (w == pid)
      break;
    if (w < 0) {
      res.error = fmt::format("waitpid failed: {}", std::strerror(errno));
      return res;
    }
    if (std::chrono::steady_clock::now() > deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      res.timed_out = true;
      return res;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (WIFEXITED(status))
    res.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status))
    res.error = fmt::format("engine killed by signal {}", WTERMSIG(status));
  return res;
}

bool executable(const fs::path& p) { return !p.empty() && ::access(p.c_str(), X_OK) == 0 && fs::is_regular_file(p); }

std::optional<fs::path> search_path(std::string_view name) {
  const char* path = std::getenv("PATH");
  if (!path)
    return std::nullopt;
  std::string_view rest(path);
  while (!rest.empty()) {
    const auto colon = rest.find(':');
    const auto dir = rest.substr(0, colon);
    if (!dir.empty()) {
      fs::path candidate = fs::path(dir) / name;
      if (executable(candidate))
        return candidate;
    }
    if (colon == std::string_view::npos)
      break;
    rest.remove_prefix(colon + 1);
  }
  return std::nullopt;
}

FailureKind classify(std::string_view log) {
  static const std::regex convergence(
      R"((timestep too small|no convergence|singular matrix|gmin stepping failed|source stepping failed|iteration limit reached|run simulation\(s\) aborted))",
      std::regex::icase);
  if (std::regex_search(log.begin(), log.end(), convergence))
    return FailureKind::ConvergenceFailure;
  return FailureKind::EngineCrash;
}

} // namespace

std::string_view to_string(FailureKind kind) {
  switch (kind) {
  case FailureKind::ConvergenceFailure: return "ConvergenceFailure";
  case FailureKind::Timeout: return "Timeout";
  case FailureKind::EngineCrash: return "EngineCrash";
  case FailureKind::ParseFailure: return "ParseFailure";
  }
  return "";
}

SimError::SimError(SimFailure failure)
    : Error(fmt::format("{}: {}", to_string(failure.kind), failure.message)), failure_(std::move(failure)) {}

const RealWaveform* SimResult::real(std::string_view name) const {
  auto it = waveforms.find(std::string(name));
  return it == waveforms.end() ? nullptr : std::get_if<RealWaveform>(&it->second);
}

const ComplexWaveform* SimResult::complex(std::string_view name) const {
  auto it = waveforms.find(std::string(name));
  return it == waveforms.end() ? nullptr : std::get_if<ComplexWaveform>(&it->second);
}

fs::path locate_engine(const fs::path& preferred) {
  if (!preferred.empty()) {
    if (executable(preferred))
      return preferred;
    if (auto found = search_path(preferred.string()))
      return *found;
    throw ConfigError(fmt::format("SPICE engine '{}' is not an executable", preferred.string()));
  }
  if (const char* env = std::getenv("AMSIZER_SPICE"); env && *env)
    return locate_engine(env);
  if (auto found = search_path("ngspice"))
    return *found;
#ifdef AMSIZER_WASM_ENGINE
  const fs::path shim(AMSIZER_WASM_ENGINE);
  if (executable(shim) && fs::exists(shim.parent_path() / "node_modules" / "eecircuit-engine"))
    return shim;
#endif
  throw ConfigError("no SPICE engine found: set AMSIZER_SPICE, put ngspice on PATH or run npm install in "
                    "tools/ngspice-wasm");
}

NgspiceSimulator::NgspiceSimulator(EngineConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.executable = locate_engine(cfg_.executable);
  multi_deck_ = cfg_.executable.filename().string().find("ngspice-wasm") != std::string::npos;
  if (cfg_.workdir.empty())
    cfg_.workdir = fs::temp_directory_path() / fmt::format("amsizer-{}", ::getpid());
  if (!(cfg_.timeout > 0.0))
    throw ConfigError("simulation timeout must be positive");
}

std::vector<SimOutcome> NgspiceSimulator::run(std::span<const SimJob> jobs) {
  std::vector<SimOutcome> out;
  if (jobs.empty())
    return out;

  std::size_t first = 0;
  {
    std::lock_guard lock(mu_);
    first = counter_;
    counter_ += jobs.size();
  }
  std::error_code ec;
  fs::create_directories(cfg_.workdir, ec);

  struct Files {
    fs::path deck, raw, log;
  };
  std::vector<Files> files;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto stem = cfg_.workdir / fmt::format("sim{:05d}", first + i);
    Files f{stem.string() + ".cir", stem.string() + ".raw", stem.string() + ".log"};
    fs::remove(f.raw, ec);
    fs::remove(f.log, ec);
    std::ofstream(f.deck, std::ios::binary) << jobs[i].deck;
    files.push_back(std::move(f));
  }
  const fs::path console = cfg_.workdir / "engine-console.log";

  std::vector<SpawnResult> spawned(jobs.size());
  std::vector<double> wall(jobs.size(), 0.0);
  auto args_for = [&](std::size_t i) {
    return std::vector<std::string>{"-o", files[i].log.string(), "-r", files[i].raw.string(), files[i].deck.string()};
  };
  if (multi_deck_) {
    std::vector<std::string> args{cfg_.executable.string(), "-b"};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      auto a = args_for(i);
      args.insert(args.end(), a.begin(), a.end());
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = spawn_and_wait(args, console, cfg_.timeout * static_cast<double>(jobs.size()));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fill(spawned.begin(), spawned.end(), r);
    std::fill(wall.begin(), wall.end(), dt / static_cast<double>(jobs.size()));
  } else {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      std::vector<std::string> args{cfg_.executable.string(), "-b"};
      auto a = args_for(i);
      args.insert(args.end(), a.begin(), a.end());
      const auto t0 = std::chrono::steady_clock::now();
      spawned[i] = spawn_and_wait(args, console, cfg_.timeout);
      wall[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& f = files[i];
    std::string log = slurp(f.log);
    if (log.empty())
      log = slurp(console);
    auto fail = [&](FailureKind kind, std::string msg) {
      out.emplace_back(SimFailure{kind, jobs[i].planned, std::move(msg), log_excerpt(log)});
    };
    if (!fs::exists(f.raw)) {
      if (spawned[i].timed_out)
        fail(FailureKind::Timeout, fmt::format("engine exceeded {} s", cfg_.timeout));
      else if (!spawned[i].error.empty())
        fail(FailureKind::EngineCrash, spawned[i].error);
      else {
        const auto kind = classify(log);
        fail(kind, kind == FailureKind::ConvergenceFailure
                       ? std::string("engine reported non-convergence")
                       : fmt::format("engine exited with status {} without results", spawned[i].exit_code));
      }
      continue;
    }
    try {
      auto plot = parse_raw(slurp(f.raw));
      SimResult r;
      r.planned = jobs[i].planned;
      r.waveforms = std::move(plot.waveforms);
      r.op_point = std::move(plot.op_point);
      r.wallclock = wall[i];
      r.engine_log = std::move(log);
      if (r.waveforms.empty() && r.op_point.empty())
        fail(FailureKind::ParseFailure, "rawfile holds no data");
      else
        out.emplace_back(std::move(r));
    } catch (const ParseFailure& e) {
      fail(FailureKind::ParseFailure, e.what());
    }
    if (!cfg_.keep_files) {
      fs::remove(f.deck, ec);
      fs::remove(f.raw, ec);
      fs::remove(f.log, ec);
    }
  }
  return out;
}

SimResult run_simulation(const std::string& deck, const RunLimits& limits, const PlannedAnalysis& planned) {
  EngineConfig cfg;
  cfg.timeout = limits.timeout;
  cfg.workdir = limits.workdir;
  NgspiceSimulator sim(cfg);
  const SimJob job{planned, deck};
  auto outcomes = sim.run(std::span<const SimJob>(&job, 1));
  if (auto* failure = std::get_if<SimFailure>(&outcomes.front()))
    throw SimError(*failure);
  return std::get<SimResult>(std::move(outcomes.front()));
}

} // namespace amsizer
