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

#include "fmtee/net.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace fmtee::net {

bool Stream::read_exact(std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    std::size_t n = read_some(out.subspan(got));
    if (n == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::kChannelError, "stream ended mid-message");
    }
    got += n;
  }
  return true;
}

std::string_view direction_name(Direction d) {
  return d == Direction::kToServer ? "to_server" : "to_client";
}

// --- framing ----------------------------------------------------------------

void write_frame(Stream& s, std::uint8_t type, ByteView payload) {
  if (payload.size() + 1 > kMaxFrameSize) {
    throw Error(ErrorCode::kMessageTooLarge, "frame payload too large");
  }
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(payload.size() + 1)).u8(type).raw(payload);
  s.write_all(w.bytes());
}

std::optional<Frame> read_frame(Stream& s, std::size_t max) {
  std::array<std::uint8_t, 4> len_buf;
  if (!s.read_exact(len_buf)) return std::nullopt;
  std::uint32_t len = ByteReader(len_buf).u32();
  if (len == 0 || len > max) {
    throw Error(ErrorCode::kProtocolError,
                "bad frame length " + std::to_string(len));
  }
  Bytes body(len);
  if (!s.read_exact(body)) {
    throw Error(ErrorCode::kChannelError, "stream ended mid-frame");
  }
  Frame f;
  f.type = body[0];
  f.payload.assign(body.begin() + 1, body.end());
  return f;
}

Bytes encode_error(ErrorCode code, std::string_view detail) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(code)).lp(detail);
  return w.take();
}

Error decode_error(ByteView payload) {
  try {
    ByteReader r(payload, ErrorCode::kProtocolError);
    auto code = static_cast<ErrorCode>(r.u8());
    std::string detail = r.lp_string();
    r.expect_end();
    return Error(code, detail);
  } catch (const Error&) {
    return Error(ErrorCode::kProtocolError, "unparseable error frame");
  }
}

// --- TCP --------------------------------------------------------------------

namespace {

struct HostPort {
  std::string host;
  std::string port;
};

HostPort split_address(const std::string& address, ErrorCode code) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 ||
      colon + 1 == address.size()) {
    throw Error(code, "address must be host:port, got '" + address + "'");
  }
  return {address.substr(0, colon), address.substr(colon + 1)};
}

addrinfo* resolve(const HostPort& hp, bool passive, ErrorCode code) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  int rc = getaddrinfo(hp.host.c_str(), hp.port.c_str(), &hints, &res);
  if (rc != 0) {
    throw Error(code, "cannot resolve " + hp.host + ": " + gai_strerror(rc));
  }
  return res;
}

std::string errno_text() { return std::strerror(errno); }

class TcpStream : public Stream {
 public:
  explicit TcpStream(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpStream() override {
    close();
    ::close(fd_);
  }

  void write_all(ByteView data) override {
    std::size_t sent = 0;
    while (sent < data.size()) {
      ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent,
                         MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::kChannelError, "send: " + errno_text());
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::size_t read_some(std::span<std::uint8_t> out) override {
    for (;;) {
      ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EINTR) continue;
      if (errno == ECONNRESET || errno == ENOTCONN) return 0;
      throw Error(ErrorCode::kChannelError, "recv: " + errno_text());
    }
  }

  void close() override { ::shutdown(fd_, SHUT_RDWR); }

 private:
  int fd_;
};

class TcpListener : public Listener {
 public:
  TcpListener(int fd, std::string address)
      : fd_(fd), address_(std::move(address)) {}
  ~TcpListener() override {
    close();
    ::close(fd_);
  }

  std::unique_ptr<Stream> accept() override {
    for (;;) {
      if (closed_) return nullptr;
      int c = ::accept(fd_, nullptr, nullptr);
      if (c >= 0) return std::make_unique<TcpStream>(c);
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return nullptr;
    }
  }

  std::string address() const override { return address_; }

  void close() override {
    if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_;
  std::string address_;
  std::atomic<bool> closed_{false};
};

}  // namespace

std::unique_ptr<Listener> TcpTransport::listen(const std::string& address) {
  HostPort hp = split_address(address, ErrorCode::kBindFailed);
  addrinfo* res = resolve(hp, true, ErrorCode::kBindFailed);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw Error(ErrorCode::kBindFailed, "socket: " + errno_text());
  }
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 ||
      ::listen(fd, 128) != 0) {
    std::string why = errno_text();
    freeaddrinfo(res);
    ::close(fd);
    throw Error(ErrorCode::kBindFailed, address + ": " + why);
  }
  freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  char ip[INET_ADDRSTRLEN];
  inet_ntop(AF_INET, &bound.sin_addr, ip, sizeof(ip));
  std::string resolved =
      std::string(ip) + ":" + std::to_string(ntohs(bound.sin_port));
  return std::make_unique<TcpListener>(fd, resolved);
}

std::unique_ptr<Stream> TcpTransport::connect(const std::string& address) {
  HostPort hp = split_address(address, ErrorCode::kConnectFailed);
  addrinfo* res = resolve(hp, false, ErrorCode::kConnectFailed);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw Error(ErrorCode::kConnectFailed, "socket: " + errno_text());
  }
  if (::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    std::string why = errno_text();
    freeaddrinfo(res);
    ::close(fd);
    throw Error(ErrorCode::kConnectFailed, address + ": " + why);
  }
  freeaddrinfo(res);
  return std::make_unique<TcpStream>(fd);
}

std::string TcpTransport::ephemeral_address(std::string_view) {
  return "127.0.0.1:0";
}

// --- SimNetwork -------------------------------------------------------------

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> buf;
  bool closed = false;

  void close() {
    {
      std::lock_guard lock(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class SimStream : public Stream {
 public:
  SimStream(std::shared_ptr<SimNetwork> net, std::string link, Direction dir,
            std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out)
      : net_(std::move(net)),
        link_(std::move(link)),
        dir_(dir),
        in_(std::move(in)),
        out_(std::move(out)) {}
  ~SimStream() override { close(); }

  void write_all(ByteView data) override {
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) {
        throw Error(ErrorCode::kChannelError, "peer closed " + link_);
      }
    }
    Bytes b(data.begin(), data.end());
    net_->deliver(link_, dir_, b);
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) {
        throw Error(ErrorCode::kChannelError, "peer closed " + link_);
      }
      out_->buf.insert(out_->buf.end(), b.begin(), b.end());
    }
    out_->cv.notify_all();
  }

  std::size_t read_some(std::span<std::uint8_t> out) override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->buf.empty() || in_->closed; });
    std::size_t n = std::min(out.size(), in_->buf.size());
    std::copy_n(in_->buf.begin(), n, out.begin());
    in_->buf.erase(in_->buf.begin(), in_->buf.begin() + n);
    return n;
  }

  void close() override {
    in_->close();
    out_->close();
  }

 private:
  std::shared_ptr<SimNetwork> net_;
  std::string link_;
  Direction dir_;
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

}  // namespace

struct SimListenerState {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::unique_ptr<Stream>> pending;
  bool closed = false;
  std::uint64_t connections = 0;
};

namespace {

class SimListener : public Listener {
 public:
  SimListener(std::shared_ptr<SimNetwork> net, std::string address,
              std::shared_ptr<SimListenerState> state)
      : net_(std::move(net)),
        address_(std::move(address)),
        state_(std::move(state)) {}
  ~SimListener() override { close(); }

  std::unique_ptr<Stream> accept() override {
    std::unique_lock lock(state_->mu);
    state_->cv.wait(lock,
                    [&] { return !state_->pending.empty() || state_->closed; });
    if (state_->closed) return nullptr;
    auto s = std::move(state_->pending.front());
    state_->pending.pop_front();
    return s;
  }

  std::string address() const override { return address_; }

  void close() override {
    std::deque<std::unique_ptr<Stream>> dropped;
    {
      std::lock_guard lock(state_->mu);
      if (state_->closed) return;
      state_->closed = true;
      dropped.swap(state_->pending);
    }
    state_->cv.notify_all();
    net_->unregister(address_);
  }

 private:
  std::shared_ptr<SimNetwork> net_;
  std::string address_;
  std::shared_ptr<SimListenerState> state_;
};

}  // namespace

SimNetwork::SimNetwork() : epoch_(std::chrono::steady_clock::now()) {}

std::shared_ptr<SimNetwork> SimNetwork::create() {
  return std::shared_ptr<SimNetwork>(new SimNetwork());
}

std::unique_ptr<Listener> SimNetwork::listen(const std::string& address) {
  auto state = std::make_shared<SimListenerState>();
  {
    std::lock_guard lock(mu_);
    if (address.empty() || listeners_.count(address)) {
      throw Error(ErrorCode::kBindFailed, "address in use: " + address);
    }
    listeners_[address] = state;
  }
  return std::make_unique<SimListener>(shared_from_this(), address, state);
}

std::unique_ptr<Stream> SimNetwork::connect(const std::string& address) {
  std::shared_ptr<SimListenerState> state;
  {
    std::lock_guard lock(mu_);
    auto it = listeners_.find(address);
    if (it == listeners_.end()) {
      throw Error(ErrorCode::kConnectFailed, "nothing listening on " + address);
    }
    state = it->second;
  }
  auto to_server = std::make_shared<Pipe>();
  auto to_client = std::make_shared<Pipe>();
  std::unique_ptr<Stream> client;
  {
    std::lock_guard lock(state->mu);
    if (state->closed) {
      throw Error(ErrorCode::kConnectFailed, "listener closed: " + address);
    }
    std::string link = address + "#" + std::to_string(++state->connections);
    auto self = shared_from_this();
    state->pending.push_back(std::make_unique<SimStream>(
        self, link, Direction::kToClient, to_server, to_client));
    client = std::make_unique<SimStream>(self, link, Direction::kToServer,
                                         to_client, to_server);
  }
  state->cv.notify_all();
  return client;
}

std::string SimNetwork::ephemeral_address(std::string_view hint) {
  std::lock_guard lock(mu_);
  return "sim://" + std::string(hint) + "-" + std::to_string(next_ephemeral_++);
}

void SimNetwork::set_interceptor(Interceptor interceptor) {
  std::lock_guard lock(mu_);
  interceptor_ = std::move(interceptor);
}

void SimNetwork::deliver(const std::string& link, Direction dir, Bytes& bytes) {
  Interceptor icpt;
  {
    std::lock_guard lock(mu_);
    icpt = interceptor_;
  }
  if (icpt) icpt(link, dir, bytes);
  std::lock_guard lock(mu_);
  taps_.push_back(TapRecord{
      link, dir,
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now() - epoch_),
      bytes});
}

void SimNetwork::unregister(const std::string& address) {
  std::lock_guard lock(mu_);
  listeners_.erase(address);
}

std::vector<TapRecord> SimNetwork::tap_log() const {
  std::lock_guard lock(mu_);
  return taps_;
}

Bytes SimNetwork::tapped_bytes() const {
  std::lock_guard lock(mu_);
  Bytes out;
  for (const TapRecord& r : taps_) {
    out.insert(out.end(), r.bytes.begin(), r.bytes.end());
  }
  return out;
}

void SimNetwork::clear_taps() {
  std::lock_guard lock(mu_);
  taps_.clear();
}

// --- Server -----------------------------------------------------------------

Server::Server(std::unique_ptr<Listener> listener, Handler handler)
    : listener_(std::move(listener)),
      handler_(std::move(handler)),
      address_(listener_->address()) {
  acceptor_ = std::thread([this] { accept_loop(); });
}

Server::~Server() { stop(); }

void Server::accept_loop() {
  for (;;) {
    std::unique_ptr<Stream> s = listener_->accept();
    if (!s) return;
    std::lock_guard lock(mu_);
    if (stopped_) {
      s->close();
      return;
    }
    reap_locked();
    Connection& c = connections_.emplace_back();
    c.stream = std::move(s);
    c.thread = std::thread([this, &c] {
      try {
        handler_(*c.stream);
      } catch (const std::exception&) {
        // The peer sees the stream close.
      }
      c.stream->close();
      c.done = true;
    });
  }
}

void Server::reap_locked() {
  for (auto it = connections_.begin(); it != connections_.end();) {
    if (it->done) {
      it->thread.join();
      it = connections_.erase(it);
    } else {
      ++it;
    }
  }
}

void Server::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopped_) return;
    stopped_ = true;
  }
  listener_->close();
  if (acceptor_.joinable()) acceptor_.join();
  std::list<Connection> conns;
  {
    std::lock_guard lock(mu_);
    for (Connection& c : connections_) c.stream->close();
    conns.splice(conns.end(), connections_);
  }
  for (Connection& c : conns) {
    if (c.thread.joinable()) c.thread.join();
  }
}

}  // namespace fmtee::net
