#pragma once

// EMBRPC: out-of-process embedding protocol.
//
//   server -> client : handshake line {"proto":"embrpc/1","dim":200}\n
//   client -> server : u32 LE byte length + f32 LE samples (200 per slice)
//   server -> client : u32 LE byte length + f32 LE values (200 per slice)
//
// One response per request, in order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cogload/features.hpp"

namespace cogload::embrpc {

inline constexpr const char* kProto = "embrpc/1";

// Owns a pair of file descriptors (they may be the same socket).
class Channel {
 public:
  Channel() = default;
  Channel(int read_fd, int write_fd, bool owns);
  ~Channel();
  Channel(Channel&& other) noexcept;
  Channel& operator=(Channel&& other) noexcept;
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  bool valid() const { return read_fd_ >= 0; }

  // Returns false on orderly EOF before the first byte; throws
  // ProviderFailure on EOF mid-read and Timeout when `timeout_s` elapses.
  bool read_exact(void* dst, std::size_t n, double timeout_s);
  std::string read_line(std::size_t max_len, double timeout_s);
  void write_all(const void* src, std::size_t n, double timeout_s);

 private:
  void close_fds();
  int read_fd_{-1};
  int write_fd_{-1};
  bool owns_{false};
};

// Connects to "host:port" / "tcp://host:port" (ConnectFailure on error).
Channel connect_tcp(const std::string& endpoint, double timeout_s);
// Spawns `command` via /bin/sh with its stdin/stdout attached.
Channel spawn_process(const std::string& command, int* pid_out);

// Listening TCP socket on 127.0.0.1 (port 0 picks a free port).
class Listener {
 public:
  explicit Listener(std::uint16_t port);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  std::uint16_t port() const { return port_; }
  Channel accept_one();

 private:
  int fd_{-1};
  std::uint16_t port_{0};
};

// Serves one client until it disconnects: handshake, then frames.
void serve(Channel& ch, const EmbeddingProvider& provider);

// Frame helpers shared by client, server and tests.
void write_frame(Channel& ch, std::span<const float> values, double timeout_s);
// Returns false on clean EOF at a frame boundary.
bool read_frame(Channel& ch, std::vector<float>& values, std::size_t max_bytes, double timeout_s);

}  // namespace cogload::embrpc
