// Copyright 2026 The fmtee Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Byte-stream transports and the shared frame format.
//
// Two transports carry identical framing: TCP sockets for multi-process
// runs, and SimNetwork, an in-process network whose links are always tapped
// and optionally intercepted.
//
// Frame: u32 big-endian length (covering type and payload), u8 type, payload.

#ifndef FMTEE_NET_H_
#define FMTEE_NET_H_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fmtee/bytes.h"

namespace fmtee::net {

inline constexpr std::size_t kMaxFrameSize = 64u << 20;

// Message types shared by every protocol in the suite.
namespace msg {
inline constexpr std::uint8_t kVerifyReq = 0x01;
inline constexpr std::uint8_t kVerifyResp = 0x02;
inline constexpr std::uint8_t kDeployReq = 0x10;
inline constexpr std::uint8_t kDeployResp = 0x11;
inline constexpr std::uint8_t kHostRead = 0x12;
inline constexpr std::uint8_t kHostWrite = 0x13;
inline constexpr std::uint8_t kHostRegions = 0x14;
inline constexpr std::uint8_t kHostFilePut = 0x15;
inline constexpr std::uint8_t kHostResp = 0x16;
inline constexpr std::uint8_t kHelloClient = 0x20;
inline constexpr std::uint8_t kHelloServer = 0x21;
inline constexpr std::uint8_t kData = 0x22;
inline constexpr std::uint8_t kError = 0x7F;
}  // namespace msg

class Stream {
 public:
  virtual ~Stream() = default;
  // Throws CHANNEL_ERROR when the peer is gone.
  virtual void write_all(ByteView data) = 0;
  // Blocks until at least one byte is available. Returns 0 at end of stream.
  virtual std::size_t read_some(std::span<std::uint8_t> out) = 0;
  // Shuts down both directions; the peer sees end of stream.
  virtual void close() = 0;

  // False on a clean end of stream before the first byte. Throws
  // CHANNEL_ERROR when the stream ends part way.
  bool read_exact(std::span<std::uint8_t> out);
};

class Listener {
 public:
  virtual ~Listener() = default;
  // nullptr once closed.
  virtual std::unique_ptr<Stream> accept() = 0;
  virtual std::string address() const = 0;
  virtual void close() = 0;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Throws BIND_FAILED.
  virtual std::unique_ptr<Listener> listen(const std::string& address) = 0;
  // Throws CONNECT_FAILED.
  virtual std::unique_ptr<Stream> connect(const std::string& address) = 0;
  // An address that listen() accepts and that picks a fresh endpoint.
  virtual std::string ephemeral_address(std::string_view hint) = 0;
};

// "host:port"; port 0 binds an ephemeral port. listen() reports the
// resolved address.
class TcpTransport : public Transport {
 public:
  std::unique_ptr<Listener> listen(const std::string& address) override;
  std::unique_ptr<Stream> connect(const std::string& address) override;
  std::string ephemeral_address(std::string_view hint) override;
};

enum class Direction : std::uint8_t { kToServer = 0, kToClient = 1 };

std::string_view direction_name(Direction d);

struct TapRecord {
  // "<listen address>#<connection number>"
  std::string link;
  Direction direction;
  std::chrono::nanoseconds timestamp;
  Bytes bytes;
};

struct SimListenerState;

class SimNetwork : public Transport,
                   public std::enable_shared_from_this<SimNetwork> {
 public:
  // May rewrite bytes in flight. Taps record what is delivered.
  using Interceptor =
      std::function<void(const std::string& link, Direction, Bytes&)>;

  static std::shared_ptr<SimNetwork> create();

  std::unique_ptr<Listener> listen(const std::string& address) override;
  std::unique_ptr<Stream> connect(const std::string& address) override;
  std::string ephemeral_address(std::string_view hint) override;

  void set_interceptor(Interceptor interceptor);
  std::vector<TapRecord> tap_log() const;
  // Every delivered byte on every link, in delivery order.
  Bytes tapped_bytes() const;
  void clear_taps();

  // Internal: called by streams.
  void deliver(const std::string& link, Direction dir, Bytes& bytes);
  void unregister(const std::string& address);

 private:
  SimNetwork();

  mutable std::mutex mu_;
  std::chrono::steady_clock::time_point epoch_;
  std::map<std::string, std::shared_ptr<SimListenerState>> listeners_;
  std::uint64_t next_ephemeral_ = 1;
  Interceptor interceptor_;
  std::vector<TapRecord> taps_;
};

struct Frame {
  std::uint8_t type = 0;
  Bytes payload;
};

void write_frame(Stream& s, std::uint8_t type, ByteView payload);
// nullopt on a clean end of stream. Throws PROTOCOL_ERROR for a zero or
// oversized length, CHANNEL_ERROR for a truncated frame.
std::optional<Frame> read_frame(Stream& s, std::size_t max = kMaxFrameSize);

// ERROR frame payload: u8 error code, u32-length-prefixed detail.
Bytes encode_error(ErrorCode code, std::string_view detail);
Error decode_error(ByteView payload);

// Accept loop with one thread per connection. The handler owns nothing; the
// server closes every open stream on stop().
class Server {
 public:
  using Handler = std::function<void(Stream&)>;

  Server(std::unique_ptr<Listener> listener, Handler handler);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  const std::string& address() const { return address_; }
  void stop();

 private:
  struct Connection {
    std::unique_ptr<Stream> stream;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void reap_locked();

  std::unique_ptr<Listener> listener_;
  Handler handler_;
  std::string address_;
  std::mutex mu_;
  bool stopped_ = false;
  std::list<Connection> connections_;
  std::thread acceptor_;
};

}  // namespace fmtee::net

#endif  // FMTEE_NET_H_
