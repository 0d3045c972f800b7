#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "fbttr/fed/protocol.hpp"

namespace fbttr::fed {

Server::Server(ServerTransport& transport, ServerConfig config)
    : transport_(transport), config_(std::move(config)) {
  config_.fit.validate();
}

void Server::send(std::size_t roster_index, const Message& m) {
  auto& entry = state_.client_roster.at(roster_index);
  if (!entry.alive) return;
  try {
    transport_.send(entry.conn, encode(m));
  } catch (const ProtocolError&) {
    drop(roster_index);
  }
}

void Server::drop(std::size_t roster_index) {
  auto& entry = state_.client_roster.at(roster_index);
  if (!entry.alive) return;
  entry.alive = false;
  try {
    transport_.close(entry.conn);
  } catch (const ProtocolError&) {
  }
}

// Receives one message per listed client concurrently. A client that stays
// silent for two consecutive timeout windows, disconnects, or sends something
// out of sequence is excluded for the rest of the run. ERROR replies exclude
// the client from this round only.
std::vector<Server::Reply> Server::gather(const std::vector<std::size_t>& roster_indices,
                                          MessageKind expected, std::uint32_t round) {
  struct Slot {
    std::optional<Message> message;
    bool dead = false;
  };
  std::vector<Slot> slots(roster_indices.size());
  {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < roster_indices.size(); ++i) {
      const std::size_t conn = state_.client_roster[roster_indices[i]].conn;
      workers.emplace_back([this, conn, &slot = slots[i]] {
        try {
          for (int attempt = 0; attempt < 2; ++attempt) {
            auto frame = transport_.receive(conn, config_.round_timeout);
            if (frame) {
              slot.message = decode(*frame);
              return;
            }
          }
          slot.dead = true;
        } catch (const Error&) {
          slot.dead = true;
        }
      });
    }
  }

  std::vector<Reply> replies;
  for (std::size_t i = 0; i < roster_indices.size(); ++i) {
    const std::size_t idx = roster_indices[i];
    auto& slot = slots[i];
    if (slot.dead) {
      drop(idx);
      continue;
    }
    const Message& m = *slot.message;
    if (m.kind() == MessageKind::Error) continue;
    const bool registration = expected == MessageKind::Hello;
    if (m.kind() != expected || m.round != round ||
        (!registration && m.client_id != state_.client_roster[idx].client_id)) {
      drop(idx);
      continue;
    }
    replies.push_back({idx, m});
  }
  return replies;
}

BttrModel Server::run() {
  const std::size_t n_conn = transport_.connections();
  if (n_conn == 0) throw ProtocolError("server has no client connections");

  // Registration.
  state_.client_roster.clear();
  for (std::size_t c = 0; c < n_conn; ++c) state_.client_roster.push_back({c, 0, 0, true});
  std::vector<std::size_t> all(n_conn);
  for (std::size_t i = 0; i < n_conn; ++i) all[i] = i;
  auto hellos = gather(all, MessageKind::Hello, 0);
  if (hellos.empty()) throw ProtocolError("no client completed registration");

  const Hello& first = std::get<Hello>(hellos.front().message.payload);
  std::vector<RosterEntry> roster;
  std::vector<NormStats> stats;
  for (const auto& r : hellos) {
    const Hello& h = std::get<Hello>(r.message.payload);
    if (h.feature_shape != first.feature_shape || h.responses != first.responses) {
      throw ProtocolError("client " + std::to_string(r.message.client_id) +
                          " has a different feature space");
    }
    if (h.sample_count == 0) throw ProtocolError("client reported zero samples");
    for (const auto& e : roster) {
      if (e.client_id == r.message.client_id) {
        throw ProtocolError("duplicate client id " + std::to_string(e.client_id));
      }
    }
    roster.push_back({state_.client_roster[r.roster_index].conn, r.message.client_id, h.sample_count, true});
    stats.push_back(h.stats);
  }
  // Dead registrations stay closed; the rest are ordered by id so that
  // aggregation order never depends on connection order.
  std::vector<std::size_t> order(roster.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return roster[a].client_id < roster[b].client_id; });
  state_.client_roster.clear();
  client_stats_.clear();
  for (auto i : order) {
    state_.client_roster.push_back(roster[i]);
    client_stats_.push_back(stats[i]);
  }

  BttrModel model;
  model.input_shape = first.feature_shape;
  model.trace_retained = config_.fit.retain_trace;

  NormStats pooled;
  if (config_.normalize) {
    std::vector<std::size_t> counts;
    for (std::size_t i = 0; i < client_stats_.size(); ++i) {
      if (client_stats_[i].empty()) throw ProtocolError("client sent no normalisation statistics");
      counts.push_back(state_.client_roster[i].sample_count);
    }
    pooled = combine_norm_stats(client_stats_, counts);
    model.normalization = pooled;
  }

  auto alive = [&] {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < state_.client_roster.size(); ++i) {
      if (state_.client_roster[i].alive) out.push_back(i);
    }
    return out;
  };
  auto residual_norms = [](const std::vector<std::pair<double, double>>& parts) {
    double e = 0.0, f = 0.0;
    for (const auto& [pe, pf] : parts) {
      e += pe * pe;
      f += pf * pf;
    }
    return std::pair{std::sqrt(e), std::sqrt(f)};
  };

  for (std::uint32_t k = 1; k <= config_.fit.max_blocks; ++k) {
    state_.round = k;
    auto live = alive();
    if (live.empty()) {
      if (k == 1) throw ProtocolError("all clients dropped out");
      break;
    }

    Hello open;
    if (k == 1) open.stats = pooled;
    for (auto i : live) send(i, Message{k, state_.client_roster[i].client_id, open});
    auto reports = gather(live, MessageKind::AceReport, k);

    if (k == 1) {
      std::vector<std::pair<double, double>> norms;
      for (const auto& r : reports) {
        const auto& a = std::get<AceReport>(r.message.payload);
        norms.emplace_back(a.e_norm, a.f_norm);
      }
      model.trace.push_back(residual_norms(norms));
    }

    std::vector<std::size_t> participants;
    std::vector<AceReport> active;
    for (const auto& r : reports) {
      const auto& a = std::get<AceReport>(r.message.payload);
      if (a.skip) continue;
      participants.push_back(r.roster_index);
      active.push_back(a);
    }
    if (active.empty()) {
      if (k == 1) throw NumericalError("no client could extract a first block");
      break;
    }

    const Harmonization h = harmonize_ranks(active);
    state_.target_ranks = h.target_ranks;
    for (std::size_t j = 0; j < participants.size(); ++j) {
      send(participants[j], Message{k, state_.client_roster[participants[j]].client_id, h.assignments[j]});
    }
    auto updates_in = gather(participants, MessageKind::BlockUpdate, k);
    std::vector<std::pair<BlockParams, std::uint64_t>> updates;
    for (const auto& r : updates_in) {
      const auto& u = std::get<BlockUpdate>(r.message.payload);
      if (u.sample_count != state_.client_roster[r.roster_index].sample_count) {
        drop(r.roster_index);
        continue;
      }
      updates.emplace_back(u.block, u.sample_count);
    }
    if (updates.empty()) {
      if (k == 1) throw NumericalError("no client delivered a first block");
      break;
    }
    const BlockParams global = aggregate_block(updates);

    live = alive();
    for (auto i : live) send(i, Message{k, state_.client_roster[i].client_id, GlobalBlock{global}});
    auto acks = gather(live, MessageKind::DeflateAck, k);
    if (acks.empty()) {
      if (k == 1) throw ProtocolError("no client acknowledged the first block");
      break;
    }

    // Prediction uses the sample-weighted average of the local coefficients.
    Block block = block_of(global);
    block.core *= 0.0;
    block.d.setZero();
    block.scale = 0.0;
    std::vector<std::uint64_t> counts;
    for (const auto& r : acks) counts.push_back(std::get<DeflateAck>(r.message.payload).sample_count);
    const auto weights = aggregation_weights(counts);
    std::vector<std::pair<double, double>> norms;
    for (std::size_t j = 0; j < acks.size(); ++j) {
      const auto& a = std::get<DeflateAck>(acks[j].message.payload);
      if (a.core.shape() != block.core.shape() || a.d.size() != block.d.size()) {
        throw ProtocolError("deflation acknowledgement does not match the global block");
      }
      block.core += weights[j] * a.core;
      block.d += weights[j] * a.d;
      block.scale += weights[j] * a.scale;
      norms.emplace_back(a.e_norm, a.f_norm);
    }
    model.trace.push_back(residual_norms(norms));
    state_.global_blocks.push_back(block);
    model.blocks.push_back(std::move(block));
  }

  for (auto i : alive()) send(i, Message{state_.round, state_.client_roster[i].client_id, Done{}});
  if (!config_.fit.retain_trace) model.trace.clear();
  materialize(model);
  return model;
}

}  // namespace fbttr::fed
