#pragma once

// Line-oriented JSON bridge to an external classifier process.
//
// Request  (engine -> child stdin):  {"id": <int>, "wav_path": "<path>"}
// Response (child stdout -> engine): {"id": <int>, "confidences": {"<label>": <float>, ...}}

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "adjfree/audio.hpp"
#include "adjfree/classifier.hpp"
#include "adjfree/error.hpp"

namespace adjfree {

struct SubprocessOptions {
  std::chrono::milliseconds timeout{10000};
  std::size_t pool_size = 1;
  /// Directory for exchanged WAV files; empty means $ADJFREE_TMPDIR or the system temp dir.
  std::filesystem::path tmpdir;
  /// Replies whose confidences sum within this band of 1 are renormalized.
  double sum_tolerance = 1e-3;
};

inline std::filesystem::path exchange_dir(const SubprocessOptions& opt) {
  if (!opt.tmpdir.empty()) return opt.tmpdir;
  if (const char* env = std::getenv("ADJFREE_TMPDIR"); env != nullptr && *env != '\0') return env;
  return std::filesystem::temp_directory_path();
}

/// Parses one reply line. Throws ProtocolError on any violation.
inline ClassificationResult parse_reply(const std::string& line, std::int64_t expected_id, double sum_tolerance) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed reply (not JSON): ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer()) {
    throw ProtocolError("malformed reply: missing integer 'id'");
  }
  if (j["id"].get<std::int64_t>() != expected_id) {
    throw ProtocolError("reply id " + std::to_string(j["id"].get<std::int64_t>()) + " does not match request id " +
                        std::to_string(expected_id));
  }
  if (!j.contains("confidences") || !j["confidences"].is_object() || j["confidences"].empty()) {
    throw ProtocolError("malformed reply: missing 'confidences' object");
  }
  std::map<std::string, double> conf;
  double sum = 0.0;
  for (const auto& [label, v] : j["confidences"].items()) {
    if (!v.is_number()) throw ProtocolError("malformed reply: confidence for '" + label + "' is not a number");
    const double c = v.get<double>();
    if (!std::isfinite(c) || c < 0.0) throw ProtocolError("malformed reply: confidence for '" + label + "' < 0");
    conf[label] = c;
    sum += c;
  }
  if (std::abs(sum - 1.0) > sum_tolerance) {
    throw ProtocolError("confidences sum to " + std::to_string(sum) + ", outside 1 +/- " +
                        std::to_string(sum_tolerance));
  }
  for (auto& [label, c] : conf) c /= sum;
  return ClassificationResult::from_confidences(std::move(conf), 1e-9);
}

/// One child process with a pipe pair. Not thread-safe; the pool serializes use.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) throw ProcessError("pipe() failed");
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw ProcessError("pipe() failed");
    }
    pid_ = fork();
    if (pid_ < 0) throw ProcessError("fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = to_child[1];
    out_ = from_child[0];
    fcntl(in_, F_SETFD, FD_CLOEXEC);
    fcntl(out_, F_SETFD, FD_CLOEXEC);
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() { terminate(); }

  void terminate() noexcept {
    if (in_ >= 0) close(in_);
    if (out_ >= 0) close(out_);
    in_ = out_ = -1;
    if (pid_ > 0) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }

  void send_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = write(in_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProcessError("classifier process closed its input");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TimeoutError("classifier did not reply within " + std::to_string(timeout.count()) + " ms");
      pollfd p{out_, POLLIN, 0};
      const int r = poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ProcessError("poll() failed");
      }
      if (r == 0) continue;
      char chunk[4096];
      const ssize_t n = read(out_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProcessError("read from classifier failed");
      }
      if (n == 0) throw ProcessError("classifier process exited");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_ = -1;
  int in_ = -1;
  int out_ = -1;
  std::string buffer_;
};

/// Classifier backed by a pool of external processes speaking the line protocol.
/// A child that times out or misbehaves is killed and replaced on next use.
class SubprocessClassifier final : public Classifier {
 public:
  explicit SubprocessClassifier(std::string command, SubprocessOptions opt = {})
      : command_(std::move(command)), opt_(std::move(opt)), slots_(std::max<std::size_t>(opt_.pool_size, 1)) {
    std::signal(SIGPIPE, SIG_IGN);
  }

  ClassificationResult classify(const Waveform& w) override {
    const std::size_t slot = acquire();
    struct Release {
      SubprocessClassifier* self;
      std::size_t slot;
      ~Release() { self->release(slot); }
    } release{this, slot};

    const std::int64_t id = next_id_++;
    const auto path = exchange_dir(opt_) / ("adjfree_" + std::to_string(getpid()) + "_" + std::to_string(id) + ".wav");
    write_wav(w, path);
    struct Remove {
      std::filesystem::path p;
      ~Remove() {
        std::error_code ec;
        std::filesystem::remove(p, ec);
      }
    } remove{path};

    auto& child = slots_[slot];
    try {
      if (!child) child = std::make_unique<ChildProcess>(command_);
      child->send_line(nlohmann::json{{"id", id}, {"wav_path", path.string()}}.dump());
      return parse_reply(child->read_line(opt_.timeout), id, opt_.sum_tolerance);
    } catch (const ClassifierError&) {
      child.reset();
      throw;
    }
  }

  bool concurrent() const override { return true; }
  const std::string& command() const noexcept { return command_; }

 private:
  std::size_t acquire() {
    std::unique_lock lock(mutex_);
    for (;;) {
      for (std::size_t i = 0; i < busy_.size(); ++i) {
        if (!busy_[i]) {
          busy_[i] = true;
          return i;
        }
      }
      if (busy_.size() < slots_.size()) {
        busy_.push_back(true);
        return busy_.size() - 1;
      }
      cv_.wait(lock);
    }
  }

  void release(std::size_t slot) {
    {
      std::lock_guard lock(mutex_);
      busy_[slot] = false;
    }
    cv_.notify_one();
  }

  std::string command_;
  SubprocessOptions opt_;
  std::vector<std::unique_ptr<ChildProcess>> slots_;
  std::vector<bool> busy_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::atomic<std::int64_t> next_id_{1};
};

}  // namespace adjfree
