#include "fbttr/fed/messages.hpp"

#include "fbttr/binary.hpp"

namespace fbttr::fed {

namespace {

constexpr std::string_view kMagic = "FBTP";
using Reader = binary::Reader<ProtocolError>;

void put_stats(binary::Writer& w, const NormStats& s) {
  w.vector(s.x_mean);
  w.vector(s.x_std);
  w.vector(s.y_mean);
  w.vector(s.y_std);
}

NormStats get_stats(Reader& r) {
  NormStats s;
  s.x_mean = r.vector();
  s.x_std = r.vector();
  s.y_mean = r.vector();
  s.y_std = r.vector();
  return s;
}

void put_block(binary::Writer& w, const BlockParams& b) {
  w.tensor(b.core);
  w.tensor(b.score_core);
  w.count(b.factors.size());
  for (const auto& p : b.factors) w.matrix(p);
  w.matrix(b.q);
  w.vector(b.d);
  w.f64(b.scale);
}

BlockParams get_block(Reader& r) {
  BlockParams b;
  b.core = r.tensor();
  b.score_core = r.tensor();
  const std::size_t n = r.count();
  for (std::size_t i = 0; i < n; ++i) b.factors.push_back(r.matrix());
  b.q = r.matrix();
  b.d = r.vector();
  b.scale = r.f64();
  return b;
}

struct PayloadWriter {
  binary::Writer& w;

  void operator()(const Hello& m) {
    w.u64(m.sample_count);
    w.extents(m.feature_shape);
    w.u32(m.responses);
    put_stats(w, m.stats);
  }
  void operator()(const AceReport& m) {
    w.u8(m.skip ? 1 : 0);
    w.f64(m.snr);
    w.f64(m.tau);
    w.f64(m.bic);
    w.extents(m.ranks);
    w.f64(m.e_norm);
    w.f64(m.f_norm);
  }
  void operator()(const HyperAssign& m) {
    w.f64(m.snr);
    w.f64(m.tau);
    w.extents(m.target_ranks);
  }
  void operator()(const BlockUpdate& m) {
    w.u64(m.sample_count);
    put_block(w, m.block);
  }
  void operator()(const GlobalBlock& m) { put_block(w, m.block); }
  void operator()(const DeflateAck& m) {
    w.u64(m.sample_count);
    w.f64(m.e_norm);
    w.f64(m.f_norm);
    w.tensor(m.core);
    w.vector(m.d);
    w.f64(m.scale);
  }
  void operator()(const Done&) {}
  void operator()(const ErrorMsg& m) { w.string(m.message); }
};

Payload read_payload(MessageKind kind, Reader& r) {
  switch (kind) {
    case MessageKind::Hello: {
      Hello m;
      m.sample_count = r.u64();
      m.feature_shape = r.extents();
      m.responses = r.u32();
      m.stats = get_stats(r);
      return m;
    }
    case MessageKind::AceReport: {
      AceReport m;
      m.skip = r.u8() != 0;
      m.snr = r.f64();
      m.tau = r.f64();
      m.bic = r.f64();
      m.ranks = r.extents();
      m.e_norm = r.f64();
      m.f_norm = r.f64();
      return m;
    }
    case MessageKind::HyperAssign: {
      HyperAssign m;
      m.snr = r.f64();
      m.tau = r.f64();
      m.target_ranks = r.extents();
      return m;
    }
    case MessageKind::BlockUpdate: {
      BlockUpdate m;
      m.sample_count = r.u64();
      m.block = get_block(r);
      return m;
    }
    case MessageKind::GlobalBlock:
      return GlobalBlock{get_block(r)};
    case MessageKind::DeflateAck: {
      DeflateAck m;
      m.sample_count = r.u64();
      m.e_norm = r.f64();
      m.f_norm = r.f64();
      m.core = r.tensor();
      m.d = r.vector();
      m.scale = r.f64();
      return m;
    }
    case MessageKind::Done:
      return Done{};
    case MessageKind::Error:
      return ErrorMsg{r.string()};
  }
  throw ProtocolError("unknown message kind " + std::to_string(static_cast<int>(kind)));
}

}  // namespace

const char* to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::Hello: return "HELLO";
    case MessageKind::AceReport: return "ACE_REPORT";
    case MessageKind::HyperAssign: return "HYPER_ASSIGN";
    case MessageKind::BlockUpdate: return "BLOCK_UPDATE";
    case MessageKind::GlobalBlock: return "GLOBAL_BLOCK";
    case MessageKind::DeflateAck: return "DEFLATE_ACK";
    case MessageKind::Done: return "DONE";
    case MessageKind::Error: return "ERROR";
  }
  return "UNKNOWN";
}

Frame encode(const Message& m) {
  binary::Writer payload;
  payload.u32(m.round);
  payload.u32(m.client_id);
  std::visit(PayloadWriter{payload}, m.payload);

  binary::Writer frame;
  frame.bytes(kMagic);
  frame.u8(kWireVersion);
  frame.u8(static_cast<std::uint8_t>(m.kind()));
  frame.count(payload.buffer().size());
  auto& out = frame.buffer();
  out.insert(out.end(), payload.buffer().begin(), payload.buffer().end());
  return frame.take();
}

MessageKind frame_kind(std::span<const unsigned char> frame) {
  if (frame.size() < kFrameHeaderSize) throw ProtocolError("frame shorter than header");
  if (std::string_view(reinterpret_cast<const char*>(frame.data()), 4) != kMagic) {
    throw ProtocolError("bad frame magic");
  }
  if (frame[4] != kWireVersion) {
    throw ProtocolError("unsupported wire version " + std::to_string(frame[4]));
  }
  const auto kind = frame[5];
  if (kind < 1 || kind > 8) throw ProtocolError("unknown message kind " + std::to_string(kind));
  return static_cast<MessageKind>(kind);
}

std::uint32_t payload_length(std::span<const unsigned char> header) {
  frame_kind(header);
  Reader r(header.subspan(6, 4));
  return r.u32();
}

Message decode(std::span<const unsigned char> frame) {
  const MessageKind kind = frame_kind(frame);
  const std::uint32_t length = payload_length(frame.first(kFrameHeaderSize));
  if (frame.size() != kFrameHeaderSize + length) throw ProtocolError("frame length mismatch");
  Reader r(frame.subspan(kFrameHeaderSize));
  Message m;
  m.round = r.u32();
  m.client_id = r.u32();
  m.payload = read_payload(kind, r);
  if (!r.done()) throw ProtocolError(std::string("trailing bytes in ") + to_string(kind));
  return m;
}

BlockParams params_of(const Block& b) {
  return {b.core, b.score_core, b.factors, b.q, b.d, b.scale};
}

Block block_of(const BlockParams& p) {
  Block b;
  b.core = p.core;
  b.score_core = p.score_core;
  b.factors = p.factors;
  b.q = p.q;
  b.d = p.d;
  b.scale = p.scale;
  return b;
}

}  // namespace fbttr::fed
