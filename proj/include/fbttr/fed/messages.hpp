#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fbttr/bttr.hpp"

namespace fbttr::fed {

// Wire frame: "FBTP", version byte, kind byte, u32 LE payload length, payload.
// The payload always starts with u32 round and u32 client_id, followed by the
// kind-specific fields below in declaration order. Arrays carry a u32
// element count; shapes precede data.
using Frame = std::vector<unsigned char>;

inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kFrameHeaderSize = 10;

enum class MessageKind : std::uint8_t {
  Hello = 1,
  AceReport = 2,
  HyperAssign = 3,
  BlockUpdate = 4,
  GlobalBlock = 5,
  DeflateAck = 6,
  Done = 7,
  Error = 8,
};

const char* to_string(MessageKind kind);

// Client -> server: registration. Server -> client: opens round `round`;
// the first one may carry pooled normalisation statistics.
struct Hello {
  std::uint64_t sample_count = 0;
  Extents feature_shape;
  std::uint32_t responses = 0;
  NormStats stats;
};

struct AceReport {
  bool skip = false;
  double snr = 0.0;
  double tau = 0.0;
  double bic = 0.0;
  Extents ranks;  // (R_1, ..., R_N)
  double e_norm = 0.0;
  double f_norm = 0.0;
};

struct HyperAssign {
  double snr = 0.0;
  double tau = 0.0;
  Extents target_ranks;
};

// The shareable part of a block: no sample-indexed quantities.
struct BlockParams {
  Tensor core;
  Tensor score_core;
  std::vector<Matrix> factors;
  Matrix q;
  Vector d;
  double scale = 1.0;
};

struct BlockUpdate {
  std::uint64_t sample_count = 0;
  BlockParams block;
};

struct GlobalBlock {
  BlockParams block;
};

struct DeflateAck {
  std::uint64_t sample_count = 0;
  double e_norm = 0.0;
  double f_norm = 0.0;
  Tensor core;  // local G^(X) under the global factors
  Vector d;
  double scale = 1.0;
};

struct Done {};

struct ErrorMsg {
  std::string message;
};

using Payload = std::variant<Hello, AceReport, HyperAssign, BlockUpdate, GlobalBlock, DeflateAck,
                             Done, ErrorMsg>;

struct Message {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  Payload payload;

  MessageKind kind() const { return static_cast<MessageKind>(payload.index() + 1); }
};

Frame encode(const Message& m);
Message decode(std::span<const unsigned char> frame);

// Header helpers for stream transports.
MessageKind frame_kind(std::span<const unsigned char> frame);
std::uint32_t payload_length(std::span<const unsigned char> header);

BlockParams params_of(const Block& b);
Block block_of(const BlockParams& p);

}  // namespace fbttr::fed
