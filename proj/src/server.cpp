#include "recgraph/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "recgraph/wire.hpp"

namespace recgraph {

namespace {

bool write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

// Reads exactly size bytes; returns false on EOF or error.
bool read_all(int fd, std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::recv(fd, data, size, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) return false;
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

// Frame = 10-byte header + payload. Returns an empty vector on EOF before
// the header; throws ParseError on a header that cannot be valid.
std::vector<std::uint8_t> read_frame(int fd) {
  std::vector<std::uint8_t> frame(10);
  if (!read_all(fd, frame.data(), 10)) return {};
  wire::Reader r(frame.data(), 10);
  if (r.u32() != wire::kMagic) throw ParseError("bad frame magic");
  (void)r.u8();
  (void)r.u8();
  const std::uint32_t len = r.u32();
  if (len > (64u << 20)) throw ParseError("frame payload too large");
  frame.resize(10 + len);
  if (len > 0 && !read_all(fd, frame.data() + 10, len)) {
    throw ParseError("connection closed mid-frame");
  }
  return frame;
}

}  // namespace

ShardServer::ShardServer(std::shared_ptr<EmbeddingTable> table,
                         const std::string& host, std::uint16_t port)
    : table_(std::move(table)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw TransportError("bad bind address \"" + host + "\"");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    throw TransportError("cannot bind " + host + ":" + std::to_string(port));
  }
  if (::listen(listen_fd_, 64) != 0) {
    ::close(listen_fd_);
    throw TransportError("listen() failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  accept_thread_ = std::thread([this] { accept_loop(); });
}

ShardServer::~ShardServer() { stop(); }

void ShardServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard lock(workers_mu_);
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
}

void ShardServer::accept_loop() {
  while (!stopping_.load()) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;  // listener closed
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(workers_mu_);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void ShardServer::serve_connection(int fd) {
  for (;;) {
    std::vector<std::uint8_t> frame;
    try {
      frame = read_frame(fd);
    } catch (const ParseError& e) {
      const wire::AckResponse err{wire::Opcode::Ping, wire::Status::Malformed,
                                  0, e.what()};
      const auto out = wire::encode_response(err);
      write_all(fd, out.data(), out.size());
      break;
    }
    if (frame.empty()) break;  // clean EOF

    wire::Response resp;
    bool fatal = false;
    try {
      const wire::Request req = wire::decode_request(frame);
      if (const auto* pull = std::get_if<wire::PullRequest>(&req)) {
        wire::PullResponse r;
        r.dim = table_->dim();
        table_->pull(pull->keys, r.values);
        resp = std::move(r);
      } else if (const auto* push = std::get_if<wire::PushRequest>(&req)) {
        if (push->dim != table_->dim()) {
          resp = wire::AckResponse{wire::Opcode::Push, wire::Status::DimMismatch,
                                   0,
                                   "push dim " + std::to_string(push->dim) +
                                       " != table dim " +
                                       std::to_string(table_->dim())};
        } else {
          table_->push(push->keys, push->grads, push->lr);
          resp = wire::AckResponse{wire::Opcode::Push, wire::Status::Ok, 0, ""};
        }
      } else if (const auto* save = std::get_if<wire::SaveRequest>(&req)) {
        try {
          const std::uint64_t n = table_->save(save->path);
          resp = wire::AckResponse{wire::Opcode::Save, wire::Status::Ok, n, ""};
        } catch (const std::exception& e) {
          resp = wire::AckResponse{wire::Opcode::Save, wire::Status::IoFailed, 0,
                                   e.what()};
        }
      } else if (const auto* load = std::get_if<wire::LoadRequest>(&req)) {
        try {
          const std::uint64_t n = table_->load(load->path);
          resp = wire::AckResponse{wire::Opcode::Load, wire::Status::Ok, n, ""};
        } catch (const std::exception& e) {
          resp = wire::AckResponse{wire::Opcode::Load, wire::Status::IoFailed, 0,
                                   e.what()};
        }
      } else {
        resp = wire::AckResponse{wire::Opcode::Ping, wire::Status::Ok, 0, ""};
      }
    } catch (const std::exception& e) {
      resp = wire::AckResponse{wire::Opcode::Ping, wire::Status::Malformed, 0,
                               e.what()};
      fatal = true;
    }
    const auto out = wire::encode_response(resp);
    if (!write_all(fd, out.data(), out.size()) || fatal) break;
  }
  ::close(fd);
}

RemoteStore::RemoteStore(std::string host, std::uint16_t port,
                         std::uint32_t dim, int max_retries)
    : host_(std::move(host)), port_(port), dim_(dim),
      max_retries_(max_retries) {}

RemoteStore::~RemoteStore() { close_socket(); }

void RemoteStore::close_socket() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void RemoteStore::connect_if_needed() {
  if (fd_ >= 0) return;
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw TransportError("bad shard address \"" + host_ + "\"");
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw TransportError("cannot connect to " + host_ + ":" +
                         std::to_string(port_));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  fd_ = fd;
}

std::vector<std::uint8_t> RemoteStore::roundtrip(
    const std::vector<std::uint8_t>& frame) {
  std::lock_guard lock(mu_);
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries_; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20 << attempt));
    }
    try {
      connect_if_needed();
      if (!write_all(fd_, frame.data(), frame.size())) {
        throw TransportError("send failed");
      }
      auto resp = read_frame(fd_);
      if (resp.empty()) throw TransportError("connection closed by shard");
      return resp;
    } catch (const TransportError& e) {
      last_error = e.what();
      close_socket();
    } catch (const ParseError& e) {
      last_error = e.what();
      close_socket();
    }
  }
  throw TransportError("shard " + host_ + ":" + std::to_string(port_) +
                       " unreachable: " + last_error);
}

void RemoteStore::pull(std::span<const std::uint64_t> keys,
                       std::vector<float>& out) {
  wire::PullRequest req;
  req.keys.assign(keys.begin(), keys.end());
  const auto raw = roundtrip(wire::encode_request(req));
  const auto resp = wire::decode_response(raw);
  const auto* pull = std::get_if<wire::PullResponse>(&resp);
  if (!pull) throw TransportError("unexpected response opcode to PULL");
  if (pull->status != wire::Status::Ok) {
    throw TransportError("PULL failed: " + pull->error);
  }
  if (pull->dim != dim_ || pull->values.size() != keys.size() * std::size_t{dim_}) {
    throw TransportError("PULL response shape mismatch");
  }
  out = pull->values;
}

void RemoteStore::push(std::span<const std::uint64_t> keys,
                       std::span<const float> grads, float lr) {
  wire::PushRequest req;
  req.dim = dim_;
  req.lr = lr;
  req.keys.assign(keys.begin(), keys.end());
  req.grads.assign(grads.begin(), grads.end());
  const auto raw = roundtrip(wire::encode_request(req));
  const auto resp = wire::decode_response(raw);
  const auto* ack = std::get_if<wire::AckResponse>(&resp);
  if (!ack) throw TransportError("unexpected response opcode to PUSH");
  if (ack->status == wire::Status::DimMismatch) {
    throw DataError("PUSH rejected: " + ack->error);
  }
  if (ack->status != wire::Status::Ok) {
    throw TransportError("PUSH failed: " + ack->error);
  }
}

std::uint64_t RemoteStore::save(const std::string& path) {
  const auto raw = roundtrip(wire::encode_request(wire::SaveRequest{path}));
  const auto resp = wire::decode_response(raw);
  const auto* ack = std::get_if<wire::AckResponse>(&resp);
  if (!ack || ack->status != wire::Status::Ok) {
    throw IoError("remote SAVE failed: " + (ack ? ack->error : "bad response"));
  }
  return ack->count;
}

std::uint64_t RemoteStore::load(const std::string& path) {
  const auto raw = roundtrip(wire::encode_request(wire::LoadRequest{path}));
  const auto resp = wire::decode_response(raw);
  const auto* ack = std::get_if<wire::AckResponse>(&resp);
  if (!ack || ack->status != wire::Status::Ok) {
    throw IoError("remote LOAD failed: " + (ack ? ack->error : "bad response"));
  }
  return ack->count;
}

void RemoteStore::ping() {
  const auto raw = roundtrip(wire::encode_request(wire::PingRequest{}));
  const auto resp = wire::decode_response(raw);
  const auto* ack = std::get_if<wire::AckResponse>(&resp);
  if (!ack || ack->status != wire::Status::Ok) {
    throw TransportError("PING failed");
  }
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& ep) {
  const auto colon = ep.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == ep.size()) {
    throw ConfigError("endpoint \"" + ep + "\" is not host:port");
  }
  const std::string host = ep.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(ep.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("endpoint \"" + ep + "\" has a bad port");
  }
  if (port < 0 || port > 65535) {
    throw ConfigError("endpoint \"" + ep + "\" has a bad port");
  }
  return {host, static_cast<std::uint16_t>(port)};
}

}  // namespace recgraph
