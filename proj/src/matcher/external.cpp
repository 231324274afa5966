#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cmath>
#include <cstring>
#include <string>

#include "advbiom/core/image_io.hpp"
#include "advbiom/matcher/matcher.hpp"

extern char** environ;

namespace advbiom::matcher {

namespace fs = std::filesystem;

namespace {

struct Fd {
  int fd = -1;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

void write_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::write(fd, s.data() + off, s.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw AdapterError(std::string("writing to adapter: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string read_all(int fd) {
  std::string out;
  char buf[4096];
  for (;;) {
    const ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n == 0) break;
    if (n < 0) {
      if (errno == EINTR) continue;
      throw AdapterError(std::string("reading from adapter: ") + std::strerror(errno));
    }
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

}  // namespace

ExternalMatcher::ExternalMatcher(fs::path executable, std::vector<std::string> args, fs::path scratch_dir)
    : executable_(std::move(executable)), args_(std::move(args)), scratch_(std::move(scratch_dir)) {
  if (::access(executable_.c_str(), X_OK) != 0) {
    throw AdapterError("matcher adapter " + executable_.string() + " is not executable");
  }
  fs::create_directories(scratch_);
  // an adapter that exits without reading stdin must surface as an error, not a signal
  std::signal(SIGPIPE, SIG_IGN);
}

double ExternalMatcher::score(const NormalizedImage& a, const NormalizedImage& b) {
  const auto pa = scratch_ / "probe.png", pb = scratch_ / "reference.png";
  save_normalized_png(pa, a);
  save_normalized_png(pb, b);
  return score_files(pa, pb);
}

double ExternalMatcher::score_files(const fs::path& a, const fs::path& b) {
  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0) throw AdapterError("pipe failed");
  Fd in_r{in_pipe[0]}, in_w{in_pipe[1]};
  if (::pipe(out_pipe) != 0) throw AdapterError("pipe failed");
  Fd out_r{out_pipe[0]}, out_w{out_pipe[1]};

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_r.fd, STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_w.fd, STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, in_w.fd);
  posix_spawn_file_actions_addclose(&actions, out_r.fd);

  std::string exe = executable_.string();
  std::vector<char*> argv{exe.data()};
  for (auto& s : args_) argv.push_back(s.data());
  argv.push_back(nullptr);

  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw AdapterError("cannot start " + exe + ": " + std::strerror(rc));
  in_r.reset();
  out_w.reset();

  std::string output;
  try {
    write_all(in_w.fd, a.string() + "\n" + b.string() + "\n");
    in_w.reset();
    output = read_all(out_r.fd);
  } catch (...) {
    int ignored = 0;
    ::waitpid(pid, &ignored, 0);
    throw;
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw AdapterError(exe + " failed on (" + a.string() + ", " + b.string() + ")");
  }

  double value = 0.0;
  std::size_t used = 0;
  try {
    value = std::stod(output, &used);
  } catch (const std::exception&) {
    throw AdapterError(exe + " printed no score: '" + output + "'");
  }
  if (output.find_first_not_of(" \t\r\n", used) != std::string::npos) {
    throw AdapterError(exe + " printed trailing output: '" + output + "'");
  }
  if (!std::isfinite(value) || value < -1.0 || value > 1.0) {
    throw AdapterError(exe + " returned score " + output.substr(0, used) + " outside [-1, 1]");
  }
  return value;
}

}  // namespace advbiom::matcher
