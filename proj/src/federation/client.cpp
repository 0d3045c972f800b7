#include "fbttr/fed/protocol.hpp"

namespace fbttr::fed {

namespace {

bool below_epsilon(const ClientState& s, std::uint32_t round, double epsilon) {
  if (round <= 1) return false;
  return frobenius_norm(s.e_residual) <= epsilon || s.f_residual.norm() <= epsilon;
}

}  // namespace

ClientState::ClientState(std::uint32_t id, Tensor x, Matrix y)
    : client_id(id), e_residual(std::move(x)), f_residual(std::move(y)) {
  sample_count = e_residual.order() >= 1 ? e_residual.extent(1) : 0;
  check();
}

void ClientState::check() const {
  if (e_residual.order() < 2) throw ShapeError("client data must have order >= 2");
  if (sample_count == 0 || sample_count != e_residual.extent(1) ||
      sample_count != static_cast<std::uint64_t>(f_residual.rows())) {
    throw ShapeError("client sample counts disagree");
  }
}

AceReport client_ace_report(const ClientState& state, std::uint32_t round,
                            const ClientOptions& options) {
  AceReport report;
  report.e_norm = frobenius_norm(state.e_residual);
  report.f_norm = state.f_residual.norm();
  if (below_epsilon(state, round, options.epsilon)) {
    report.skip = true;
    return report;
  }
  const AceResult a = ace(state.e_residual, state.f_residual, options.grid, options.ace);
  report.snr = a.snr_star;
  report.tau = a.tau_star;
  report.bic = a.bic;
  report.ranks = a.ranks;
  return report;
}

std::optional<BlockUpdate> client_local_block(const ClientState& state, const HyperAssign& assign,
                                              std::uint32_t round, const ClientOptions& options) {
  if (below_epsilon(state, round, options.epsilon)) return std::nullopt;
  const auto& shape = state.e_residual.shape();
  if (assign.target_ranks.size() != shape.size()) {
    throw ProtocolError("assignment has " + std::to_string(assign.target_ranks.size()) +
                        " ranks for an order-" + std::to_string(shape.size()) + " tensor");
  }
  const std::size_t responses = static_cast<std::size_t>(state.f_residual.cols());
  for (std::size_t n = 0; n < shape.size(); ++n) {
    const std::size_t extent = n == 0 ? responses : shape[n];
    if (assign.target_ranks[n] == 0 || assign.target_ranks[n] > extent) {
      throw ProtocolError("assigned rank " + std::to_string(assign.target_ranks[n]) + " for mode " +
                          std::to_string(n + 1) + " exceeds local extent " + std::to_string(extent));
    }
  }
  auto decomposition = f_mpstd(state.e_residual, state.f_residual, assign.snr, assign.tau);
  decomposition = truncate_to_ranks(decomposition, assign.target_ranks);
  const AceResult a = extract_block(state.e_residual, std::move(decomposition));
  const Block b = make_block(a, state.f_residual);
  return BlockUpdate{state.sample_count, params_of(b)};
}

DeflateResult client_deflate(const ClientState& state, const BlockParams& global) {
  const auto& shape = state.e_residual.shape();
  if (global.factors.size() + 1 != shape.size()) throw ShapeError("global block order mismatch");
  for (std::size_t n = 0; n < global.factors.size(); ++n) {
    if (static_cast<std::size_t>(global.factors[n].rows()) != shape[n + 1]) {
      throw ShapeError("global factor " + std::to_string(n + 2) + " does not match local extent");
    }
  }
  if (global.q.rows() != state.f_residual.cols()) throw ShapeError("global loadings do not match responses");

  DeflateResult out{state, {}};
  Block local;
  local.score_core = global.score_core;
  local.factors = global.factors;
  local.q = global.q;
  local.d = Vector::Zero(global.q.cols());
  local.core = Tensor(global.core.shape());
  local.scale = 0.0;
  // A vanished score means the block explains nothing here; leave residuals as they are.
  try {
    auto scores = project_scores(state.e_residual, global.factors, global.score_core);
    local.t = std::move(scores.t);
    local.scale = scores.scale;
    local.core = block_core_from(state.e_residual, local.t, local.factors);
    local.d = (state.f_residual * local.q).transpose() * local.t;
    deflate(out.state.e_residual, out.state.f_residual, local.t, local);
  } catch (const NumericalError&) {
    local.t = Matrix::Zero(static_cast<Eigen::Index>(state.sample_count), 1);
  }
  out.ack.sample_count = state.sample_count;
  out.ack.e_norm = frobenius_norm(out.state.e_residual);
  out.ack.f_norm = out.state.f_residual.norm();
  out.ack.core = local.core;
  out.ack.d = local.d;
  out.ack.scale = local.scale;
  out.state.local_blocks.push_back(std::move(local));
  return out;
}

void run_client(ClientTransport& transport, std::uint32_t client_id, const Tensor& x,
                const Matrix& y, const ClientConfig& config) {
  ClientState state(client_id, x, y);
  bool normalized = false;

  auto reply = [&](std::uint32_t round, Payload p) {
    transport.send(encode(Message{round, client_id, std::move(p)}));
  };

  Hello hello;
  hello.sample_count = state.sample_count;
  hello.feature_shape.assign(x.shape().begin() + 1, x.shape().end());
  hello.responses = static_cast<std::uint32_t>(y.cols());
  if (config.normalize) hello.stats = compute_norm_stats(x, y);
  reply(0, hello);

  for (;;) {
    auto frame = transport.receive(config.timeout);
    if (!frame) throw ProtocolError("client " + std::to_string(client_id) + ": server timed out");
    const Message m = decode(*frame);
    try {
      switch (m.kind()) {
        case MessageKind::Hello: {
          const auto& h = std::get<Hello>(m.payload);
          if (!normalized && !h.stats.empty()) {
            state.e_residual = normalize_x(h.stats, state.e_residual);
            state.f_residual = normalize_y(h.stats, state.f_residual);
            normalized = true;
          }
          reply(m.round, client_ace_report(state, m.round, config.options));
          break;
        }
        case MessageKind::HyperAssign: {
          auto update = client_local_block(state, std::get<HyperAssign>(m.payload), m.round,
                                           config.options);
          if (!update) throw ProtocolError("residuals fell below epsilon after reporting");
          reply(m.round, std::move(*update));
          break;
        }
        case MessageKind::GlobalBlock: {
          auto result = client_deflate(state, std::get<GlobalBlock>(m.payload).block);
          state = std::move(result.state);
          reply(m.round, std::move(result.ack));
          break;
        }
        case MessageKind::Done:
          return;
        case MessageKind::Error:
          throw ProtocolError("server error: " + std::get<ErrorMsg>(m.payload).message);
        default:
          throw ProtocolError(std::string("unexpected ") + to_string(m.kind()) + " at client");
      }
    } catch (const ProtocolError&) {
      throw;
    } catch (const Error& e) {
      // Local failures are reported; the server excludes this client for the round.
      reply(m.round, ErrorMsg{e.what()});
    }
  }
}

}  // namespace fbttr::fed
