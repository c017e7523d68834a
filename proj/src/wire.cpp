#include "recgraph/wire.hpp"

namespace recgraph::wire {

namespace {

std::vector<std::uint8_t> frame(Opcode op,
                                const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out;
  out.reserve(payload.size() + 10);
  Writer w(out);
  w.u32(kMagic);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(op));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload.data(), payload.size());
  return out;
}

Opcode check_header(Reader& r) {
  if (r.u32() != kMagic) throw ParseError("bad frame magic");
  if (r.u8() != kVersion) throw ParseError("unsupported protocol version");
  const std::uint8_t op = r.u8();
  if (op < 1 || op > 5) {
    throw ParseError("unknown opcode " + std::to_string(op));
  }
  const std::uint32_t len = r.u32();
  if (len != r.remaining()) throw ParseError("frame length mismatch");
  return static_cast<Opcode>(op);
}

void write_error(Writer& w, Status status, const std::string& msg) {
  w.u8(static_cast<std::uint8_t>(status));
  w.u32(static_cast<std::uint32_t>(msg.size()));
  w.bytes(msg.data(), msg.size());
}

}  // namespace

Opcode opcode_of(const Request& req) {
  struct Visitor {
    Opcode operator()(const PullRequest&) const { return Opcode::Pull; }
    Opcode operator()(const PushRequest&) const { return Opcode::Push; }
    Opcode operator()(const SaveRequest&) const { return Opcode::Save; }
    Opcode operator()(const LoadRequest&) const { return Opcode::Load; }
    Opcode operator()(const PingRequest&) const { return Opcode::Ping; }
  };
  return std::visit(Visitor{}, req);
}

std::vector<std::uint8_t> encode_request(const Request& req) {
  std::vector<std::uint8_t> payload;
  Writer w(payload);
  if (const auto* pull = std::get_if<PullRequest>(&req)) {
    w.u32(static_cast<std::uint32_t>(pull->keys.size()));
    for (auto k : pull->keys) w.u64(k);
  } else if (const auto* push = std::get_if<PushRequest>(&req)) {
    if (push->grads.size() != push->keys.size() * std::size_t{push->dim}) {
      throw ParseError("push grads size does not match keys * dim");
    }
    w.u32(static_cast<std::uint32_t>(push->keys.size()));
    w.u32(push->dim);
    w.f32(push->lr);
    for (std::size_t i = 0; i < push->keys.size(); ++i) {
      w.u64(push->keys[i]);
      for (std::uint32_t d = 0; d < push->dim; ++d) {
        w.f32(push->grads[i * push->dim + d]);
      }
    }
  } else if (const auto* save = std::get_if<SaveRequest>(&req)) {
    w.u32(static_cast<std::uint32_t>(save->path.size()));
    w.bytes(save->path.data(), save->path.size());
  } else if (const auto* load = std::get_if<LoadRequest>(&req)) {
    w.u32(static_cast<std::uint32_t>(load->path.size()));
    w.bytes(load->path.data(), load->path.size());
  }
  return frame(opcode_of(req), payload);
}

Request decode_request(const std::vector<std::uint8_t>& data) {
  Reader r(data.data(), data.size());
  const Opcode op = check_header(r);
  switch (op) {
    case Opcode::Pull: {
      PullRequest req;
      const std::uint32_t n = r.u32();
      req.keys.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) req.keys.push_back(r.u64());
      r.expect_end();
      return req;
    }
    case Opcode::Push: {
      PushRequest req;
      const std::uint32_t n = r.u32();
      req.dim = r.u32();
      req.lr = r.f32();
      req.keys.reserve(n);
      req.grads.reserve(std::size_t{n} * req.dim);
      for (std::uint32_t i = 0; i < n; ++i) {
        req.keys.push_back(r.u64());
        for (std::uint32_t d = 0; d < req.dim; ++d) req.grads.push_back(r.f32());
      }
      r.expect_end();
      return req;
    }
    case Opcode::Save: {
      SaveRequest req;
      req.path = r.str(r.u32());
      r.expect_end();
      return req;
    }
    case Opcode::Load: {
      LoadRequest req;
      req.path = r.str(r.u32());
      r.expect_end();
      return req;
    }
    case Opcode::Ping:
      r.expect_end();
      return PingRequest{};
  }
  throw ParseError("unreachable opcode");
}

std::vector<std::uint8_t> encode_response(const Response& resp) {
  std::vector<std::uint8_t> payload;
  Writer w(payload);
  Opcode op;
  if (const auto* pull = std::get_if<PullResponse>(&resp)) {
    op = Opcode::Pull;
    if (pull->status == Status::Ok) {
      w.u8(0);
      w.u32(pull->dim);
      for (float v : pull->values) w.f32(v);
    } else {
      write_error(w, pull->status, pull->error);
    }
  } else {
    const auto& ack = std::get<AckResponse>(resp);
    op = ack.opcode;
    if (ack.status == Status::Ok) {
      w.u8(0);
      if (op == Opcode::Save || op == Opcode::Load) w.u64(ack.count);
    } else {
      write_error(w, ack.status, ack.error);
    }
  }
  return frame(op, payload);
}

Response decode_response(const std::vector<std::uint8_t>& data) {
  Reader r(data.data(), data.size());
  const Opcode op = check_header(r);
  const auto status = static_cast<Status>(r.u8());
  if (status != Status::Ok) {
    const std::string msg = r.str(r.u32());
    r.expect_end();
    if (op == Opcode::Pull) return PullResponse{status, 0, {}, msg};
    return AckResponse{op, status, 0, msg};
  }
  if (op == Opcode::Pull) {
    PullResponse resp;
    resp.dim = r.u32();
    if (resp.dim == 0 && r.remaining() != 0) {
      throw ParseError("pull response with zero dim but nonempty body");
    }
    if (resp.dim != 0 && r.remaining() % (4 * std::size_t{resp.dim}) != 0) {
      throw ParseError("pull response body is not a multiple of dim");
    }
    const std::size_t count = r.remaining() / 4;
    resp.values.reserve(count);
    for (std::size_t i = 0; i < count; ++i) resp.values.push_back(r.f32());
    r.expect_end();
    return resp;
  }
  AckResponse resp;
  resp.opcode = op;
  if (op == Opcode::Save || op == Opcode::Load) resp.count = r.u64();
  r.expect_end();
  return resp;
}

}  // namespace recgraph::wire
