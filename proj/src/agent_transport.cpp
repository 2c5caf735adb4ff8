#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <stdexcept>

#include "httplib.h"
#include "tvae/agent.hpp"
#include "tvae/errors.hpp"

namespace tvae {

using nlohmann::json;

Endpoint Endpoint::parse(std::string_view url) {
  constexpr std::string_view scheme = "http://";
  if (url.substr(0, scheme.size()) != scheme) throw std::invalid_argument("only http:// endpoints are supported");
  std::string_view rest = url.substr(scheme.size());
  Endpoint ep;
  const std::size_t slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  if (slash != std::string_view::npos) ep.path = std::string(rest.substr(slash));
  const std::size_t colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    std::string_view port = authority.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), ep.port);
    if (ec != std::errc() || ptr != port.data() + port.size() || ep.port <= 0 || ep.port > 65535)
      throw std::invalid_argument("bad port in endpoint '" + std::string(url) + "'");
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw std::invalid_argument("endpoint has no host");
  ep.host = std::string(authority);
  return ep;
}

std::string Endpoint::url() const { return "http://" + host + ":" + std::to_string(port) + path; }

json wire_request(const Observation& obs, const PromptTemplates& templates) {
  json j = observation_to_json(obs);
  j["schema_version"] = kWireSchemaVersion;
  std::string system = templates.system_prompt;
  system += "\n" + templates.think_success + "\n" + templates.think_no_change;
  j["system_prompt"] = std::move(system);
  j["user_prompt"] = render_user_prompt(templates, obs.instruction, obs.history, obs.screen_ref);
  return j;
}

std::string remote_turn(const Endpoint& endpoint, const Observation& obs, const PromptTemplates& templates) {
  const std::string body = wire_request(obs, templates).dump();
  httplib::Client client(endpoint.host, endpoint.port);
  const auto secs = std::chrono::duration<double>(endpoint.timeout_seconds);
  const auto whole = std::chrono::duration_cast<std::chrono::microseconds>(secs);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(whole).count(),
                                static_cast<time_t>(whole.count() % 1000000));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(whole).count(),
                          static_cast<time_t>(whole.count() % 1000000));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(whole).count(),
                           static_cast<time_t>(whole.count() % 1000000));
  httplib::Headers headers;
  if (endpoint.bearer_token) headers.emplace("Authorization", "Bearer " + *endpoint.bearer_token);

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(endpoint.path, headers, body, "application/json");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (res) {
      if (res->status == 200) return res->body;
      // An HTTP error status is an answer, not a transport failure.
      throw AgentUnavailable("HTTP " + std::to_string(res->status) + " from " + endpoint.url());
    }
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || elapsed >= endpoint.timeout_seconds)
      throw Timeout("no reply from " + endpoint.url() + " within " + format_number(endpoint.timeout_seconds) + "s");
    last_error = httplib::to_string(err);
  }
  throw AgentUnavailable(endpoint.url() + ": " + last_error);
}

RemoteAgent::RemoteAgent(Endpoint endpoint, PromptTemplates templates)
    : endpoint_(std::move(endpoint)), templates_(std::move(templates)), limiter_(endpoint_.max_in_flight) {}

std::string RemoteAgent::turn(const Observation& obs, const ScriptContext&) {
  limiter_.acquire();
  try {
    std::string out = remote_turn(endpoint_, obs, templates_);
    limiter_.release();
    return out;
  } catch (...) {
    limiter_.release();
    throw;
  }
}

SubprocessAgent::SubprocessAgent(std::string command, PromptTemplates templates, double timeout_seconds)
    : command_(std::move(command)), templates_(std::move(templates)), timeout_seconds_(timeout_seconds) {}

SubprocessAgent::~SubprocessAgent() { stop(); }

void SubprocessAgent::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw AgentUnavailable(std::string("pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw AgentUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  signal(SIGPIPE, SIG_IGN);
  const pid_t pid = fork();
  if (pid < 0) throw AgentUnavailable(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  pending_.clear();
}

void SubprocessAgent::stop() noexcept {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    kill(pid_, SIGTERM);
    waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
  pending_.clear();
}

std::string SubprocessAgent::turn(const Observation& obs, const ScriptContext&) {
  std::lock_guard lock(mu_);
  if (pid_ < 0) start();
  std::string line = wire_request(obs, templates_).dump();
  line.push_back('\n');
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      throw AgentUnavailable("agent process '" + command_ + "' closed its input");
    }
    written += static_cast<std::size_t>(n);
  }

  const std::string marker = std::string(kStdioSentinel);
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                             std::chrono::duration<double>(timeout_seconds_));
  for (;;) {
    // The sentinel must sit on a line of its own.
    std::size_t pos = 0;
    while ((pos = pending_.find(marker, pos)) != std::string::npos) {
      const bool line_start = pos == 0 || pending_[pos - 1] == '\n';
      const std::size_t end = pos + marker.size();
      const bool line_end = end < pending_.size() && pending_[end] == '\n';
      if (line_start && line_end) {
        std::string reply = pending_.substr(0, pos);
        if (!reply.empty() && reply.back() == '\n') reply.pop_back();
        pending_.erase(0, end + 1);
        return reply;
      }
      if (line_start && end == pending_.size()) break;  // wait for the newline
      pos = end;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      stop();
      throw Timeout("agent process '" + command_ + "' did not answer within " + format_number(timeout_seconds_) + "s");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready == 0) continue;
    char buf[4096];
    const ssize_t n = read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      throw AgentUnavailable("agent process '" + command_ + "' exited");
    }
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

}  // namespace tvae
