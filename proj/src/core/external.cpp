#include "core/external.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "core/errors.hpp"

namespace zopo {

class ExternalTransport {
 public:
  virtual ~ExternalTransport() = default;
  /// One request/response exchange; throws Errc::run on failure.
  virtual std::string exchange(const std::string& request_body,
                               int timeout_ms) = 0;
};

namespace {

// ---------------------------------------------------------------------------
// Subprocess transport

void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

class SubprocessTransport : public ExternalTransport {
 public:
  explicit SubprocessTransport(std::string command)
      : command_(std::move(command)) {
    ignore_sigpipe_once();
  }

  ~SubprocessTransport() override { shutdown(); }

  std::string exchange(const std::string& request_body, int timeout_ms) override {
    ensure_running();
    const std::string line = request_body + "\n";
    const char* data = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      const ssize_t w = ::write(stdin_fd_, data, left);
      if (w < 0) {
        shutdown();
        throw Error(Errc::run, "external evaluator: pipe write failed");
      }
      data += w;
      left -= static_cast<std::size_t>(w);
    }
    return read_line(timeout_ms);
  }

 private:
  void ensure_running() {
    if (pid_ > 0) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == 0) return;  // still alive
      close_fds();
      pid_ = -1;
    }
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
      throw Error(Errc::run, "external evaluator: cannot create pipes");
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      throw Error(Errc::run, "external evaluator: fork failed");
    }
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), (char*)nullptr);
      _exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    stdin_fd_ = to_child[1];
    stdout_fd_ = from_child[0];
    buffer_.clear();
  }

  std::string read_line(int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(timeout_ms);
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) {
        shutdown();
        throw Error(Errc::run, "external evaluator: response timed out");
      }
      const int wait_ms = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
              .count());
      struct pollfd pfd{stdout_fd_, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, std::max(wait_ms, 1));
      if (pr <= 0) {
        shutdown();
        throw Error(Errc::run, "external evaluator: response timed out");
      }
      char chunk[4096];
      const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
      if (n <= 0) {
        shutdown();
        throw Error(Errc::run, "external evaluator: process closed its output");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void close_fds() {
    if (stdin_fd_ >= 0) ::close(stdin_fd_);
    if (stdout_fd_ >= 0) ::close(stdout_fd_);
    stdin_fd_ = stdout_fd_ = -1;
  }

  void shutdown() {
    close_fds();
    if (pid_ > 0) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == 0) {
        ::kill(pid_, SIGTERM);
        ::waitpid(pid_, &status, 0);
      }
      pid_ = -1;
    }
  }

  std::string command_;
  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
};

// ---------------------------------------------------------------------------
// HTTP transport

class HttpTransport : public ExternalTransport {
 public:
  explicit HttpTransport(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(Errc::invalid_argument,
                  "external evaluator: URL must start with http://");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      base_ = url;
      path_ = "/";
    } else {
      base_ = url.substr(0, path_start);
      path_ = url.substr(path_start);
    }
    if (const char* token = std::getenv("ZOPO_EVALUATOR_TOKEN")) {
      token_ = token;
    }
  }

  std::string exchange(const std::string& request_body, int timeout_ms) override {
    httplib::Client client(base_);
    client.set_connection_timeout(0, timeout_ms * 1000LL);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000LL);
    httplib::Headers headers;
    if (!token_.empty()) {
      headers.emplace("Authorization", "Bearer " + token_);
    }
    auto res = client.Post(path_, headers, request_body, "application/json");
    if (!res) {
      throw Error(Errc::run, "external evaluator: HTTP request failed");
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(Errc::run, "external evaluator: HTTP status " +
                                 std::to_string(res->status));
    }
    return res->body;
  }

 private:
  std::string base_;
  std::string path_;
  std::string token_;
};

double parse_score(const std::string& body, const std::string& expect_id,
                   bool require_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::run, "external evaluator: malformed JSON response");
  }
  if (!j.contains("score") || !j["score"].is_number()) {
    throw Error(Errc::run, "external evaluator: response lacks numeric 'score'");
  }
  if (require_id) {
    if (!j.contains("id") || !j["id"].is_string() ||
        j["id"].get<std::string>() != expect_id) {
      throw Error(Errc::run,
                  "external evaluator: response id does not match request");
    }
  }
  const double s = j["score"].get<double>();
  if (!std::isfinite(s)) {
    throw Error(Errc::run, "external evaluator: non-finite score");
  }
  return s;
}

}  // namespace

ExternalObjective::ExternalObjective(ExternalEndpoint endpoint)
    : Objective(Kind::external, 0.0, /*clamp_to_unit=*/false),
      endpoint_(std::move(endpoint)) {
  if (endpoint_.address.empty()) {
    throw Error(Errc::invalid_argument, "external evaluator: empty address");
  }
  if (endpoint_.retries < 0 || endpoint_.timeout_ms <= 0) {
    throw Error(Errc::invalid_argument,
                "external evaluator: bad timeout/retry settings");
  }
  if (endpoint_.transport == ExternalEndpoint::Transport::subprocess) {
    transport_ = std::make_unique<SubprocessTransport>(endpoint_.address);
  } else {
    transport_ = std::make_unique<HttpTransport>(endpoint_.address);
  }
}

ExternalObjective::~ExternalObjective() = default;

double ExternalObjective::evaluate_clean(const Candidate& candidate) const {
  if (!candidate.text) {
    throw Error(Errc::run, "external evaluator: candidate '" + candidate.id +
                               "' has no text payload");
  }
  std::lock_guard<std::mutex> lock(mutex_);
  if (auto it = cache_.find(candidate.id); it != cache_.end()) {
    return it->second;
  }
  const nlohmann::json request = {{"id", candidate.id}, {"text", *candidate.text}};
  const bool require_id =
      endpoint_.transport == ExternalEndpoint::Transport::subprocess;

  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.retries; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      std::this_thread::sleep_for(std::chrono::milliseconds(endpoint_.backoff_ms));
    }
    try {
      ++requests_;
      const std::string body =
          transport_->exchange(request.dump(), endpoint_.timeout_ms);
      double score = parse_score(body, candidate.id, require_id);
      if (score < 0.0 || score > 1.0) {
        ++clamps_;
        std::cerr << "[zopo] warning: evaluator score " << score
                  << " for '" << candidate.id << "' clamped to [0,1]\n";
        score = std::clamp(score, 0.0, 1.0);
      }
      cache_.emplace(candidate.id, score);
      return score;
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw Error(Errc::run, "external evaluator: giving up after " +
                             std::to_string(endpoint_.retries + 1) +
                             " attempts: " + last_error);
}

std::size_t ExternalObjective::requests_sent() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return requests_;
}

std::size_t ExternalObjective::retries_used() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return retries_;
}

std::size_t ExternalObjective::clamp_warnings() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return clamps_;
}

}  // namespace zopo
