#include "cogload/embrpc.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>

#include <json.hpp>

#include "cogload/binio.hpp"
#include "cogload/error.hpp"

namespace cogload::embrpc {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return static_cast<int>(std::max<std::int64_t>(0, left.count()));
}

Clock::time_point deadline_after(double timeout_s) {
  return Clock::now() + std::chrono::microseconds(static_cast<std::int64_t>(timeout_s * 1e6));
}

void wait_fd(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return;
    if (rc == 0) throw Error(Errc::Timeout, "EMBRPC peer did not respond in time");
    if (errno != EINTR) throw Error(Errc::ProviderFailure, std::string("poll: ") + std::strerror(errno));
  }
}

std::pair<std::string, std::string> split_host_port(std::string endpoint) {
  if (endpoint.rfind("tcp://", 0) == 0) endpoint = endpoint.substr(6);
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw Error(Errc::ConnectFailure, "endpoint must be host:port, got '" + endpoint + "'");
  }
  return {endpoint.substr(0, colon), endpoint.substr(colon + 1)};
}

}  // namespace

Channel::Channel(int read_fd, int write_fd, bool owns)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}

Channel::~Channel() { close_fds(); }

Channel::Channel(Channel&& other) noexcept
    : read_fd_(other.read_fd_), write_fd_(other.write_fd_), owns_(other.owns_) {
  other.read_fd_ = other.write_fd_ = -1;
  other.owns_ = false;
}

Channel& Channel::operator=(Channel&& other) noexcept {
  if (this != &other) {
    close_fds();
    read_fd_ = other.read_fd_;
    write_fd_ = other.write_fd_;
    owns_ = other.owns_;
    other.read_fd_ = other.write_fd_ = -1;
    other.owns_ = false;
  }
  return *this;
}

void Channel::close_fds() {
  if (owns_) {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  }
  read_fd_ = write_fd_ = -1;
}

bool Channel::read_exact(void* dst, std::size_t n, double timeout_s) {
  auto* p = static_cast<unsigned char*>(dst);
  std::size_t got = 0;
  const auto deadline = deadline_after(timeout_s);
  while (got < n) {
    wait_fd(read_fd_, POLLIN, deadline);
    const ssize_t rc = ::read(read_fd_, p + got, n - got);
    if (rc == 0) {
      if (got == 0) return false;
      throw Error(Errc::ProviderFailure, "EMBRPC peer closed the connection mid-frame");
    }
    if (rc < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(Errc::ProviderFailure, std::string("read: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(rc);
  }
  return true;
}

std::string Channel::read_line(std::size_t max_len, double timeout_s) {
  std::string line;
  char c = 0;
  while (line.size() < max_len) {
    if (!read_exact(&c, 1, timeout_s)) {
      throw Error(Errc::ProviderFailure, "peer closed before completing a line");
    }
    if (c == '\n') return line;
    line.push_back(c);
  }
  throw Error(Errc::Protocol, "line exceeds " + std::to_string(max_len) + " bytes");
}

void Channel::write_all(const void* src, std::size_t n, double timeout_s) {
  const auto* p = static_cast<const unsigned char*>(src);
  std::size_t sent = 0;
  const auto deadline = deadline_after(timeout_s);
  while (sent < n) {
    wait_fd(write_fd_, POLLOUT, deadline);
    const ssize_t rc = ::send(write_fd_, p + sent, n - sent, MSG_NOSIGNAL);
    if (rc < 0 && errno == ENOTSOCK) {
      const ssize_t w = ::write(write_fd_, p + sent, n - sent);
      if (w < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw Error(Errc::ProviderFailure, std::string("write: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(w);
      continue;
    }
    if (rc < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(Errc::ProviderFailure, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(rc);
  }
}

Channel connect_tcp(const std::string& endpoint, double timeout_s) {
  const auto [host, port] = split_host_port(endpoint);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::ConnectFailure, "cannot resolve " + endpoint);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, static_cast<int>(timeout_s * 1000)) > 0 ? 0 : -1;
      int err = 0;
      socklen_t len = sizeof(err);
      if (rc == 0 && (::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0)) rc = -1;
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      break;
    }
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(Errc::ConnectFailure, "cannot connect to " + endpoint);
  return Channel(fd, fd, true);
}

Channel spawn_process(const std::string& command, int* pid_out) {
  // a dead child must surface as EPIPE, not kill us
  ::signal(SIGPIPE, SIG_IGN);
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0) throw Error(Errc::ConnectFailure, "pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(Errc::ConnectFailure, "pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(Errc::ConnectFailure, "fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (pid_out != nullptr) *pid_out = pid;
  return Channel(from_child[0], to_child[1], true);
}

Listener::Listener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(Errc::Io, "socket failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 4) != 0) {
    ::close(fd_);
    throw Error(Errc::Io, "cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

Channel Listener::accept_one() {
  for (;;) {
    const int c = ::accept(fd_, nullptr, nullptr);
    if (c >= 0) return Channel(c, c, true);
    if (errno != EINTR) throw Error(Errc::Io, std::string("accept: ") + std::strerror(errno));
  }
}

void write_frame(Channel& ch, std::span<const float> values, double timeout_s) {
  binio::Writer w;
  w.put(static_cast<std::uint32_t>(values.size_bytes()));
  w.put_span(values);
  ch.write_all(w.bytes().data(), w.bytes().size(), timeout_s);
}

bool read_frame(Channel& ch, std::vector<float>& values, std::size_t max_bytes, double timeout_s) {
  unsigned char hdr[4];
  if (!ch.read_exact(hdr, 4, timeout_s)) return false;
  std::uint32_t len = 0;
  binio::Reader(hdr).get(len);
  if (len % sizeof(float) != 0 || len > max_bytes) {
    throw Error(Errc::Protocol, "malformed frame length " + std::to_string(len));
  }
  std::vector<unsigned char> payload(len);
  if (len > 0 && !ch.read_exact(payload.data(), len, timeout_s)) {
    throw Error(Errc::ProviderFailure, "peer closed after frame header");
  }
  values.resize(len / sizeof(float));
  binio::Reader(payload).get_span(std::span<float>(values));
  return true;
}

void serve(Channel& ch, const EmbeddingProvider& provider) {
  const std::string hello =
      nlohmann::json{{"proto", kProto}, {"dim", provider.dim()}}.dump() + "\n";
  ch.write_all(hello.data(), hello.size(), 30.0);
  std::vector<float> req;
  constexpr std::size_t kMaxBytes = 64u << 20;
  constexpr double kIdle = 24.0 * 3600.0;
  while (read_frame(ch, req, kMaxBytes, kIdle)) {
    if (req.size() % kSecondSamples != 0) {
      throw Error(Errc::Protocol, "request is not a whole number of 200-sample slices");
    }
    const std::size_t batch = req.size() / kSecondSamples;
    std::vector<float> out(batch * provider.dim());
    provider.embed_seconds(req, batch, out);
    write_frame(ch, out, 30.0);
  }
}

namespace {

class ExternalProvider final : public EmbeddingProvider {
 public:
  ExternalProvider(std::string endpoint, double timeout_s)
      : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {
    if (endpoint_.rfind("exec:", 0) == 0) {
      ch_ = spawn_process(endpoint_.substr(5), &pid_);
    } else {
      ch_ = connect_tcp(endpoint_, timeout_s_);
    }
    const std::string line = ch_.read_line(4096, timeout_s_);
    nlohmann::json hello;
    try {
      hello = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::Protocol, "handshake is not JSON: " + line);
    }
    if (!hello.is_object() || hello.value("proto", "") != kProto) {
      throw Error(Errc::Protocol, "unexpected handshake: " + line);
    }
    if (!hello.contains("dim") || !hello["dim"].is_number_integer()) {
      throw Error(Errc::Protocol, "handshake lacks integer dim");
    }
    dim_ = hello["dim"].get<std::size_t>();
    if (dim_ != kEmbedDim) {
      throw Error(Errc::Protocol, "provider dim " + std::to_string(dim_) + ", expected 200");
    }
  }

  ~ExternalProvider() override {
    ch_ = Channel();
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  std::string id() const override { return "external:" + endpoint_; }
  std::size_t dim() const override { return dim_; }

  void embed_seconds(std::span<const float> slices, std::size_t batch,
                     std::span<float> out) const override {
    if (slices.size() != batch * kSecondSamples || out.size() != batch * dim_) {
      throw Error(Errc::DimensionMismatch, "external provider: batch buffer size");
    }
    std::lock_guard lock(mutex_);
    if (broken_) throw Error(Errc::ProviderFailure, "connection to " + endpoint_ + " is closed");
    try {
      write_frame(ch_, slices, timeout_s_);
      std::vector<float> resp;
      if (!read_frame(ch_, resp, out.size_bytes(), timeout_s_)) {
        throw Error(Errc::ProviderFailure, "server closed the connection");
      }
      if (resp.size() != out.size()) {
        throw Error(Errc::Protocol, "malformed frame length: got " +
                                        std::to_string(resp.size() * sizeof(float)) +
                                        " bytes, expected " + std::to_string(out.size_bytes()));
      }
      for (float v : resp) {
        if (!std::isfinite(v)) throw Error(Errc::Protocol, "non-finite value in response");
      }
      std::copy(resp.begin(), resp.end(), out.begin());
    } catch (const Error&) {
      broken_ = true;
      throw;
    }
  }

 private:
  std::string endpoint_;
  double timeout_s_;
  mutable Channel ch_;
  mutable std::mutex mutex_;
  mutable bool broken_{false};
  std::size_t dim_{0};
  int pid_{-1};
};

}  // namespace

}  // namespace cogload::embrpc

namespace cogload {

std::shared_ptr<EmbeddingProvider> external_provider(const std::string& endpoint, double timeout_s) {
  return std::make_shared<embrpc::ExternalProvider>(endpoint, timeout_s);
}

}  // namespace cogload
