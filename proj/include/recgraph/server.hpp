#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "recgraph/table.hpp"

namespace recgraph {

// Serves one EmbeddingTable shard over the binary wire protocol. One thread
// per connection; requests on a connection are answered in order. Malformed
// frames get an error frame back and the connection is closed.
class ShardServer {
 public:
  // host is an IPv4 literal; port 0 binds an ephemeral port.
  ShardServer(std::shared_ptr<EmbeddingTable> table, const std::string& host,
              std::uint16_t port);
  ~ShardServer();

  ShardServer(const ShardServer&) = delete;
  ShardServer& operator=(const ShardServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<EmbeddingTable> table_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::vector<std::thread> workers_;
  std::mutex workers_mu_;
};

// ParamStore backed by a remote shard. Transport failures are retried with
// bounded backoff and never apply partially; after the retry budget a
// TransportError is thrown.
class RemoteStore final : public ParamStore {
 public:
  RemoteStore(std::string host, std::uint16_t port, std::uint32_t dim,
              int max_retries = 3);
  ~RemoteStore() override;

  std::uint32_t dim() const override { return dim_; }
  using ParamStore::pull;
  void pull(std::span<const std::uint64_t> keys,
            std::vector<float>& out) override;
  void push(std::span<const std::uint64_t> keys, std::span<const float> grads,
            float lr) override;
  std::uint64_t save(const std::string& path) override;
  std::uint64_t load(const std::string& path) override;
  void ping();

 private:
  std::vector<std::uint8_t> roundtrip(const std::vector<std::uint8_t>& frame);
  void connect_if_needed();
  void close_socket();

  std::string host_;
  std::uint16_t port_;
  std::uint32_t dim_;
  int max_retries_;
  int fd_ = -1;
  std::mutex mu_;
};

// Parses "host:port".
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& ep);

}  // namespace recgraph
