#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <variant>
#include <vector>

#include "recgraph/common.hpp"

namespace recgraph::wire {

// Binary framing, all little-endian.
//
// frame  = magic u32 | version u8 | opcode u8 | payload length u32 | payload
//
// Request payloads:
//   PULL: n u32, n x key u64
//   PUSH: n u32, dim u32, lr f32, n x (key u64, dim x f32)
//   SAVE/LOAD: path length u32, path bytes
//   PING: empty
// Response payloads (same frame, opcode echoed):
//   status u8 == 0: PULL: dim u32, n*dim f32; PUSH/PING: nothing;
//                   SAVE/LOAD: count u64
//   status u8 != 0: message length u32, message bytes

constexpr std::uint32_t kMagic = 0x47345250u;
constexpr std::uint8_t kVersion = 1;

enum class Opcode : std::uint8_t {
  Pull = 1,
  Push = 2,
  Save = 3,
  Load = 4,
  Ping = 5,
};

enum class Status : std::uint8_t {
  Ok = 0,
  Malformed = 1,
  DimMismatch = 2,
  IoFailed = 3,
};

struct PullRequest {
  std::vector<std::uint64_t> keys;
  bool operator==(const PullRequest&) const = default;
};

struct PushRequest {
  std::uint32_t dim = 0;
  float lr = 0.0f;
  std::vector<std::uint64_t> keys;
  std::vector<float> grads;  // keys.size() * dim, row-major per key
  bool operator==(const PushRequest&) const = default;
};

struct SaveRequest {
  std::string path;
  bool operator==(const SaveRequest&) const = default;
};

struct LoadRequest {
  std::string path;
  bool operator==(const LoadRequest&) const = default;
};

struct PingRequest {
  bool operator==(const PingRequest&) const = default;
};

using Request =
    std::variant<PullRequest, PushRequest, SaveRequest, LoadRequest, PingRequest>;

struct PullResponse {
  Status status = Status::Ok;
  std::uint32_t dim = 0;
  std::vector<float> values;
  std::string error;
  bool operator==(const PullResponse&) const = default;
};

struct AckResponse {  // PUSH, SAVE, LOAD, PING
  Opcode opcode = Opcode::Ping;
  Status status = Status::Ok;
  std::uint64_t count = 0;
  std::string error;
  bool operator==(const AckResponse&) const = default;
};

using Response = std::variant<PullResponse, AckResponse>;

Opcode opcode_of(const Request& req);

std::vector<std::uint8_t> encode_request(const Request& req);
std::vector<std::uint8_t> encode_response(const Response& resp);

// Decoders take a full frame (header + payload) and throw ParseError on any
// malformed input: bad magic, bad version, unknown opcode, length mismatch.
Request decode_request(const std::vector<std::uint8_t>& frame);
Response decode_response(const std::vector<std::uint8_t>& frame);

// Little-endian primitives shared with the checkpoint codec.
class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
  std::uint8_t u8() {
    need(1);
    return *p_++;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p_[i]) << (8 * i);
    p_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p_[i]) << (8 * i);
    p_ += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }
  void expect_end() const {
    if (p_ != end_) throw ParseError("trailing bytes in frame payload");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ParseError("truncated frame payload");
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

}  // namespace recgraph::wire
