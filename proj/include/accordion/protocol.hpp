#pragma once
// Incremental model transfer protocol. A server endpoint owns one immutable
// (model, profile table) pair and answers framed requests: a model request is
// met with an offer sized to the client's link budget followed by the chunk
// stream, an upgrade request with exactly the missing chunks. The client side
// is a single-session state machine that assembles a PartialModel as chunks
// arrive. A deterministic link simulator accounts transfer time for
// experiments without a network.
//
// Frame layout: 4-byte big-endian frame length, then 1 tag byte and the
// little-endian message body (the length counts tag + body). Unknown tags and
// malformed bodies are protocol errors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "accordion/errors.hpp"
#include "accordion/profile.hpp"
#include "accordion/wire.hpp"

namespace accordion {

// ---------------------------------------------------------------------------
// Link model

struct LinkModel {
  std::uint64_t throughput_bps = 0;
  double rtt_s = 0.0;

  // Seconds for one request/response cycle moving `bits` across the link.
  double transfer_time(std::uint64_t bits) const {
    if (throughput_bps == 0) throw ConfigError("LinkModel: zero throughput");
    if (!(rtt_s >= 0.0)) throw ConfigError("LinkModel: negative rtt");
    return rtt_s + static_cast<double>(bits) / static_cast<double>(throughput_bps);
  }
};

// ---------------------------------------------------------------------------
// Messages

struct ModelRequest {
  std::array<std::uint8_t, 16> model_id{};  // all zeros: accept whatever is served
  SkipScheme scheme = SkipScheme::coml;
  std::uint64_t deadline_ms = 0;
  std::uint64_t throughput_bps = 0;  // client-measured link estimate
  std::uint64_t rtt_ms = 0;          // client-measured round-trip estimate
  std::optional<double> max_error;
};

struct ModelOffer {
  ModelManifest manifest;
  std::uint32_t n = 0;
  double predicted_error = 0.0;
  std::uint64_t predicted_transfer_ms = 0;
  // false when a requested error cap could not be met within the deadline
  // (the deadline wins and the offer carries the best error the budget buys)
  bool accuracy_met = true;
};

struct ChunkData {
  LayerChunk chunk;
};

struct TransferDone {
  std::uint32_t n = 0;  // units the session now covers
};

struct UpgradeRequest {
  std::uint32_t current_n = 0;
  std::optional<std::uint32_t> target_n;  // exactly one of these is set
  std::optional<double> target_error;
};

enum class ReplyCode : std::uint16_t { infeasible = 1, not_found = 2, bad_request = 3 };

struct ErrorReply {
  ReplyCode code = ReplyCode::bad_request;
  std::string detail;
};

using Message =
    std::variant<ModelRequest, ModelOffer, ChunkData, TransferDone, UpgradeRequest, ErrorReply>;

inline constexpr std::uint32_t kMaxFrameBytes = 1u << 26;  // 64 MiB

namespace detail {

inline std::uint8_t scheme_byte(SkipScheme s) {
  return s == SkipScheme::coml ? 0 : 1;
}
inline SkipScheme scheme_from_byte(std::uint8_t b) {
  if (b == 0) return SkipScheme::coml;
  if (b == 1) return SkipScheme::blockcoml;
  throw ProtocolError("unknown scheme byte " + std::to_string(b));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}
inline double read_f64(ByteReader& r) { return std::bit_cast<double>(r.u64()); }

inline std::uint8_t message_tag(const Message& m) {
  return static_cast<std::uint8_t>(m.index() + 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Frame codec

inline std::vector<std::uint8_t> encode_frame(const Message& msg) {
  std::vector<std::uint8_t> body;
  if (const auto* r = std::get_if<ModelRequest>(&msg)) {
    body.insert(body.end(), r->model_id.begin(), r->model_id.end());
    body.push_back(detail::scheme_byte(r->scheme));
    detail::put_u64(body, r->deadline_ms);
    detail::put_u64(body, r->throughput_bps);
    detail::put_u64(body, r->rtt_ms);
    body.push_back(r->max_error ? 1 : 0);
    detail::put_f64(body, r->max_error.value_or(0.0));
  } else if (const auto* o = std::get_if<ModelOffer>(&msg)) {
    const std::vector<std::uint8_t> man = manifest_to_bytes(o->manifest);
    detail::put_u32(body, static_cast<std::uint32_t>(man.size()));
    body.insert(body.end(), man.begin(), man.end());
    detail::put_u32(body, o->n);
    detail::put_f64(body, o->predicted_error);
    detail::put_u64(body, o->predicted_transfer_ms);
    body.push_back(o->accuracy_met ? 1 : 0);
  } else if (const auto* c = std::get_if<ChunkData>(&msg)) {
    body = chunk_to_bytes(c->chunk);
  } else if (const auto* d = std::get_if<TransferDone>(&msg)) {
    detail::put_u32(body, d->n);
  } else if (const auto* u = std::get_if<UpgradeRequest>(&msg)) {
    if (u->target_n.has_value() == u->target_error.has_value())
      throw ConfigError("upgrade request needs exactly one of target depth or target error");
    detail::put_u32(body, u->current_n);
    body.push_back(u->target_error ? 1 : 0);
    detail::put_u32(body, u->target_n.value_or(0));
    detail::put_f64(body, u->target_error.value_or(0.0));
  } else if (const auto* e = std::get_if<ErrorReply>(&msg)) {
    detail::put_u16(body, static_cast<std::uint16_t>(e->code));
    detail::put_u32(body, static_cast<std::uint32_t>(e->detail.size()));
    body.insert(body.end(), e->detail.begin(), e->detail.end());
  } else {
    throw UnreachableError("message variant");
  }

  const std::uint64_t len = 1 + body.size();
  if (len > kMaxFrameBytes) throw ProtocolError("frame too large");
  std::vector<std::uint8_t> out;
  out.reserve(4 + len);
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.push_back(detail::message_tag(msg));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

// Decodes one frame from the front of `data`. Returns nothing when the bytes
// so far are a clean prefix of a frame (caller should read more); malformed
// input throws. `consumed` is set only when a message is returned.
inline std::optional<Message> decode_frame(const std::uint8_t* data, std::size_t size,
                                           std::size_t* consumed) {
  if (size < 4) return std::nullopt;
  const std::uint32_t len = (static_cast<std::uint32_t>(data[0]) << 24) |
                            (static_cast<std::uint32_t>(data[1]) << 16) |
                            (static_cast<std::uint32_t>(data[2]) << 8) |
                            static_cast<std::uint32_t>(data[3]);
  if (len == 0) throw ProtocolError("empty frame");
  if (len > kMaxFrameBytes) throw ProtocolError("frame too large");
  if (size - 4 < len) return std::nullopt;
  const std::uint8_t tag = data[4];
  const std::uint8_t* body = data + 5;
  const std::size_t blen = len - 1;

  Message out;
  try {
    detail::ByteReader r(body, blen);
    switch (tag) {
      case 1: {
        ModelRequest m;
        std::memcpy(m.model_id.data(), r.take(16), 16);
        m.scheme = detail::scheme_from_byte(r.u8());
        m.deadline_ms = r.u64();
        m.throughput_bps = r.u64();
        m.rtt_ms = r.u64();
        const bool has_cap = r.u8() != 0;
        const double cap = detail::read_f64(r);
        if (has_cap) m.max_error = cap;
        out = m;
        break;
      }
      case 2: {
        ModelOffer m;
        const std::uint32_t man_len = r.u32();
        const std::uint8_t* man = r.take(man_len);
        std::size_t man_used = 0;
        m.manifest = manifest_from_bytes(man, man_len, &man_used);
        if (man_used != man_len) throw ProtocolError("offer manifest length mismatch");
        m.n = r.u32();
        m.predicted_error = detail::read_f64(r);
        m.predicted_transfer_ms = r.u64();
        m.accuracy_met = r.u8() != 0;
        out = m;
        break;
      }
      case 3: {
        ChunkData m;
        m.chunk = chunk_from_bytes(body, blen);
        r.take(blen);  // chunk_from_bytes consumed everything
        out = m;
        break;
      }
      case 4: {
        TransferDone m;
        m.n = r.u32();
        out = m;
        break;
      }
      case 5: {
        UpgradeRequest m;
        m.current_n = r.u32();
        const bool by_error = r.u8() != 0;
        const std::uint32_t tn = r.u32();
        const double te = detail::read_f64(r);
        if (by_error)
          m.target_error = te;
        else
          m.target_n = tn;
        out = m;
        break;
      }
      case 6: {
        ErrorReply m;
        const std::uint16_t code = r.u16();
        if (code < 1 || code > 3) throw ProtocolError("unknown error code " + std::to_string(code));
        m.code = static_cast<ReplyCode>(code);
        const std::uint32_t dlen = r.u32();
        const std::uint8_t* d = r.take(dlen);
        m.detail.assign(reinterpret_cast<const char*>(d), dlen);
        out = m;
        break;
      }
      default:
        throw ProtocolError("unknown message tag " + std::to_string(tag));
    }
    if (r.remaining() != 0) throw ProtocolError("trailing bytes in frame");
  } catch (const IntegrityError& e) {
    // structural damage inside a well-delimited frame is a peer violation
    throw ProtocolError(std::string("malformed frame body: ") + e.what());
  }
  if (consumed) *consumed = 4 + static_cast<std::size_t>(len);
  return out;
}

namespace detail {

// Round-trips a message through the byte codec; in-process transports use it
// so every session exercises the exact wire encoding.
inline Message reencode(const Message& msg) {
  const std::vector<std::uint8_t> bytes = encode_frame(msg);
  std::size_t consumed = 0;
  std::optional<Message> back = decode_frame(bytes.data(), bytes.size(), &consumed);
  if (!back || consumed != bytes.size()) throw UnreachableError("self-encoded frame unreadable");
  return *back;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Server endpoint

class Endpoint {
 public:
  // Snapshots the model's chunk streams (both orderings) and the table; the
  // endpoint is immutable afterwards, so sessions may be served concurrently.
  Endpoint(const AccordionModel& model, const ProfileTable& table)
      : table_(table),
        model_id_(model_content_id(model)),
        total_units_(model.spec().total_units()),
        coml_(serialize(model, {SkipScheme::coml, model.spec().total_units()})),
        blockcoml_(serialize(model, {SkipScheme::blockcoml, model.spec().total_units()})) {
    table_.validate();
    if (table_.model_id != model_id_)
      throw ConfigError("profile table was built for a different model");
  }

  // Per-session negotiation state, confined to one client connection.
  struct Session {
    bool offered = false;
    SkipScheme scheme = SkipScheme::coml;
    std::uint32_t delivered_n = 0;
  };

  // Handles one client message and returns the ordered replies. The endpoint
  // only ever replies: it never produces traffic without a request.
  std::vector<Message> handle(const Message& msg, Session& session) const {
    if (const auto* r = std::get_if<ModelRequest>(&msg)) return on_request(*r, session);
    if (const auto* u = std::get_if<UpgradeRequest>(&msg)) return on_upgrade(*u, session);
    return {ErrorReply{ReplyCode::bad_request, "endpoint accepts only requests"}};
  }

  const ProfileTable& table() const { return table_; }
  const std::array<std::uint8_t, 16>& model_id() const { return model_id_; }
  std::size_t total_units() const { return total_units_; }

 private:
  const SerializedModel& stream(SkipScheme s) const {
    return s == SkipScheme::coml ? coml_ : blockcoml_;
  }

  std::vector<Message> on_request(const ModelRequest& r, Session& s) const {
    if (s.offered)
      return {ErrorReply{ReplyCode::bad_request, "session already negotiated a model"}};
    static constexpr std::array<std::uint8_t, 16> kAny{};
    if (r.model_id != kAny && r.model_id != model_id_)
      return {ErrorReply{ReplyCode::not_found, "no such model, serving " + hex_id(model_id_)}};
    if (r.throughput_bps == 0 || r.deadline_ms == 0)
      return {ErrorReply{ReplyCode::bad_request, "link budget needs positive throughput and deadline"}};
    if (r.max_error && !(*r.max_error >= 0.0 && *r.max_error <= 1.0))
      return {ErrorReply{ReplyCode::bad_request, "max error outside [0, 1]"}};

    const std::uint64_t budget = detail::budget_bits(r.throughput_bps, r.deadline_ms);
    const ProfileEntry* chosen = nullptr;
    bool accuracy_met = true;
    if (r.max_error) {
      // cheapest configuration meeting both the budget and the error cap
      for (const ProfileEntry& e : table_.entries)
        if (e.scheme == r.scheme && e.size_bits <= budget && e.error_rate <= *r.max_error &&
            (chosen == nullptr || e.n < chosen->n))
          chosen = &e;
      accuracy_met = chosen != nullptr;
    }
    if (chosen == nullptr) {
      // no cap (or none satisfiable): the deadline wins, best error it buys
      try {
        chosen = &select_by_size(table_, r.scheme, budget);
      } catch (const InfeasibleError& e) {
        return {ErrorReply{ReplyCode::infeasible, e.what()}};
      }
    }

    const SerializedModel& sm = stream(r.scheme);
    ModelOffer offer;
    offer.manifest = sm.manifest;
    offer.n = static_cast<std::uint32_t>(chosen->n);
    offer.predicted_error = chosen->error_rate;
    offer.predicted_transfer_ms =
        r.rtt_ms + static_cast<std::uint64_t>(std::llround(
                       1000.0 * static_cast<double>(chosen->size_bits) /
                       static_cast<double>(r.throughput_bps)));
    offer.accuracy_met = accuracy_met;

    std::vector<Message> replies;
    replies.reserve(2 + 3 + chosen->n);
    replies.push_back(offer);
    for (std::size_t i = 0; i < 3 + chosen->n; ++i) replies.push_back(ChunkData{sm.chunks[i]});
    replies.push_back(TransferDone{offer.n});
    s.offered = true;
    s.scheme = r.scheme;
    s.delivered_n = offer.n;
    return replies;
  }

  std::vector<Message> on_upgrade(const UpgradeRequest& u, Session& s) const {
    if (!s.offered)
      return {ErrorReply{ReplyCode::bad_request, "upgrade before a model was negotiated"}};
    if (u.target_n.has_value() == u.target_error.has_value())
      return {ErrorReply{ReplyCode::bad_request,
                         "upgrade needs exactly one of target depth or target error"}};
    if (u.current_n != s.delivered_n)
      return {ErrorReply{ReplyCode::bad_request,
                         "client depth " + std::to_string(u.current_n) +
                             " does not match session depth " + std::to_string(s.delivered_n)}};

    std::uint32_t target = 0;
    if (u.target_error) {
      if (!(*u.target_error >= 0.0 && *u.target_error <= 1.0))
        return {ErrorReply{ReplyCode::bad_request, "target error outside [0, 1]"}};
      try {
        target = static_cast<std::uint32_t>(
            select_by_accuracy(table_, s.scheme, *u.target_error).n);
      } catch (const UnreachableError& e) {
        return {ErrorReply{ReplyCode::infeasible, e.what()}};
      }
    } else {
      target = *u.target_n;
      if (target > total_units_)
        return {ErrorReply{ReplyCode::bad_request, "target depth exceeds the architecture"}};
    }

    // Anything at or below the delivered depth is already client-local: every
    // prefix of the received chunks is runnable, so nothing travels.
    if (target <= s.delivered_n) return {TransferDone{s.delivered_n}};

    const SerializedModel& sm = stream(s.scheme);
    std::vector<Message> replies;
    for (std::uint32_t idx : delta_chunks(sm.manifest, s.delivered_n, target))
      replies.push_back(ChunkData{sm.chunks[idx]});
    replies.push_back(TransferDone{target});
    s.delivered_n = target;
    return replies;
  }

  ProfileTable table_;
  std::array<std::uint8_t, 16> model_id_;
  std::size_t total_units_;
  SerializedModel coml_;
  SerializedModel blockcoml_;
};

// ---------------------------------------------------------------------------
// Client session

struct FetchRequirements {
  std::array<std::uint8_t, 16> model_id{};  // zeros: accept whatever is served
  SkipScheme scheme = SkipScheme::coml;
  std::uint64_t deadline_ms = 0;
  std::uint64_t throughput_bps = 0;
  std::uint64_t rtt_ms = 0;
  std::optional<double> max_error;
};

// Single-session client state machine. Drive it by sending the message that
// start()/upgrade_*() return, then feeding every reply to consume() until it
// reports the exchange complete. Chunks assemble into the partial model as
// they arrive, so inference on the received prefix works before completion.
class FetchSession {
 public:
  explicit FetchSession(FetchRequirements req) : req_(std::move(req)) {}

  Message start() {
    if (phase_ != Phase::idle) throw ProtocolError("fetch already started");
    ModelRequest r;
    r.model_id = req_.model_id;
    r.scheme = req_.scheme;
    r.deadline_ms = req_.deadline_ms;
    r.throughput_bps = req_.throughput_bps;
    r.rtt_ms = req_.rtt_ms;
    r.max_error = req_.max_error;
    phase_ = Phase::await_offer;
    return r;
  }

  Message upgrade_to_depth(std::uint32_t target_n) {
    require_done("upgrade");
    if (target_n > model_->descriptor().spec.total_units())
      throw ConfigError("target depth exceeds the architecture");
    UpgradeRequest u;
    u.current_n = delivered_n_;
    u.target_n = target_n;
    expected_n_ = std::max(target_n, delivered_n_);
    phase_ = Phase::receiving;
    return u;
  }

  Message upgrade_to_error(double target_error) {
    require_done("upgrade");
    UpgradeRequest u;
    u.current_n = delivered_n_;
    u.target_error = target_error;
    expected_n_.reset();  // depth is the server's pick; monotonicity still checked
    phase_ = Phase::receiving;
    return u;
  }

  // Feeds one server reply. Returns true when the current exchange finished.
  bool consume(const Message& msg) {
    if (const auto* e = std::get_if<ErrorReply>(&msg)) {
      phase_ = model_ ? Phase::done : Phase::failed;
      switch (e->code) {
        case ReplyCode::infeasible: throw InfeasibleError(e->detail);
        case ReplyCode::not_found: throw NotFoundError(e->detail);
        case ReplyCode::bad_request: throw ProtocolError("server rejected request: " + e->detail);
      }
      throw UnreachableError("reply code");
    }
    switch (phase_) {
      case Phase::await_offer: {
        const auto* o = std::get_if<ModelOffer>(&msg);
        if (!o) throw ProtocolError("expected a model offer");
        static constexpr std::array<std::uint8_t, 16> kAny{};
        if (req_.model_id != kAny && o->manifest.model_id != req_.model_id)
          throw ProtocolError("offer is for a different model");
        if (o->n > o->manifest.table.size() - 3) throw ProtocolError("offer deeper than the model");
        offer_ = *o;
        model_.emplace(o->manifest);
        expected_n_ = o->n;
        phase_ = Phase::receiving;
        return false;
      }
      case Phase::receiving: {
        if (const auto* c = std::get_if<ChunkData>(&msg)) {
          if (model_->has_chunk(c->chunk.index))
            throw ProtocolError("chunk " + std::to_string(c->chunk.index) + " sent twice");
          model_->add_chunk(c->chunk);
          received_.push_back(c->chunk);
          return false;
        }
        if (const auto* d = std::get_if<TransferDone>(&msg)) {
          if (d->n < delivered_n_) throw ProtocolError("session depth went backwards");
          if (expected_n_ && d->n != *expected_n_)
            throw ProtocolError("transfer done at depth " + std::to_string(d->n) + ", expected " +
                                std::to_string(*expected_n_));
          const std::optional<std::size_t> got = model_->achievable_n();
          if (!got || *got < d->n) throw ProtocolError("transfer done but chunks are missing");
          delivered_n_ = d->n;
          phase_ = Phase::done;
          return true;
        }
        throw ProtocolError("unexpected message during transfer");
      }
      case Phase::idle:
      case Phase::done:
      case Phase::failed:
        throw ProtocolError("unexpected message outside an exchange");
    }
    throw UnreachableError("fetch phase");
  }

  bool has_model() const { return model_.has_value(); }
  PartialModel& model() { return *model_; }
  const PartialModel& model() const { return *model_; }
  const ModelOffer& offer() const { return offer_; }
  std::uint32_t delivered_n() const { return delivered_n_; }

  // Every verified chunk in arrival order, kept so callers can re-export the
  // fetched bytes (e.g. to a container file) without re-serializing.
  const std::vector<LayerChunk>& received_chunks() const { return received_; }

 private:
  void require_done(const char* what) const {
    if (phase_ != Phase::done)
      throw ProtocolError(std::string(what) + " requires a completed transfer");
  }

  enum class Phase { idle, await_offer, receiving, done, failed };
  FetchRequirements req_;
  Phase phase_ = Phase::idle;
  ModelOffer offer_;
  std::optional<PartialModel> model_;
  std::vector<LayerChunk> received_;
  std::optional<std::uint32_t> expected_n_;
  std::uint32_t delivered_n_ = 0;
};

// ---------------------------------------------------------------------------
// In-process transport: one endpoint session reached through the byte codec,
// so even networkless exchanges run the exact wire encoding.

class LocalTransport {
 public:
  explicit LocalTransport(const Endpoint& endpoint) : endpoint_(&endpoint) {}

  std::vector<Message> exchange(const Message& msg) {
    std::vector<Message> out;
    for (const Message& reply : endpoint_->handle(detail::reencode(msg), session_))
      out.push_back(detail::reencode(reply));
    return out;
  }

 private:
  const Endpoint* endpoint_;
  Endpoint::Session session_;
};

// Runs one request/reply exchange to completion against a transport callable
// (Message -> ordered reply Messages).
using TransportFn = std::function<std::vector<Message>(const Message&)>;

inline void run_exchange(FetchSession& session, const TransportFn& transport, const Message& msg) {
  bool finished = false;
  for (const Message& reply : transport(msg)) {
    if (finished) throw ProtocolError("messages after transfer completed");
    finished = session.consume(reply);
  }
  if (!finished) throw ProtocolError("transfer ended without completion");
}

// Fetches a model sized to the requirements; the returned session holds the
// assembled PartialModel and the server's offer.
inline FetchSession client_fetch(const FetchRequirements& req, const TransportFn& transport) {
  FetchSession session(req);
  run_exchange(session, transport, session.start());
  return session;
}

// ---------------------------------------------------------------------------
// Deterministic session simulator
//
// The clock charges each exchange rtt + (table-accounted bits)/throughput:
// the initial transfer costs the chosen configuration's size_bits from the
// profile table, an upgrade costs the table-size difference. Actual framed
// wire bytes are tallied separately so byte accounting stays honest while the
// clock follows the size ledger the offer was computed from.

struct UpgradeGoal {
  std::optional<std::uint32_t> target_n;
  std::optional<double> target_error;
};

struct SimScenario {
  FetchRequirements requirements;
  LinkModel link;
  std::vector<UpgradeGoal> upgrades;
};

struct SimEvent {
  std::string kind;  // request | offer | chunks | transfer_done | upgrade_request | error
  double time_s = 0.0;
  std::uint64_t clock_bits = 0;  // bits charged to the clock by this event
  std::uint64_t wire_bits = 0;   // framed bytes * 8 actually carried
  std::optional<std::uint32_t> achievable_n;
  std::optional<double> predicted_error;
  std::string detail;
};

struct SessionLog {
  std::vector<SimEvent> events;
  std::uint64_t payload_bits = 0;  // chunk payloads only
  std::uint64_t wire_bits = 0;     // every frame, both directions
  std::uint64_t clock_bits = 0;    // table-accounted transfer bits
  double final_time_s = 0.0;
  std::uint32_t final_n = 0;
  bool failed = false;
};

namespace detail {

inline std::uint64_t frame_bits(const Message& m) { return 8 * encode_frame(m).size(); }

inline const ProfileEntry& table_entry_at(const ProfileTable& t, SkipScheme scheme,
                                          std::uint32_t n) {
  for (const ProfileEntry& e : t.entries)
    if (e.scheme == scheme && e.n == n) return e;
  throw UnreachableError("profile table lacks served depth " + std::to_string(n));
}

}  // namespace detail

inline SessionLog simulate_session(const Endpoint& endpoint, const SimScenario& scenario) {
  SessionLog log;
  LocalTransport transport(endpoint);
  FetchSession session(scenario.requirements);
  const SkipScheme scheme = scenario.requirements.scheme;
  double t = 0.0;
  std::uint64_t table_bits_have = 0;

  auto push = [&](SimEvent ev) {
    log.wire_bits += ev.wire_bits;
    log.clock_bits += ev.clock_bits;
    log.events.push_back(std::move(ev));
  };

  // One request -> replies exchange with link accounting. Returns false when
  // the server replied with an error (logged, session over).
  auto exchange = [&](const Message& request, const std::string& kind) -> bool {
    push({kind, t, 0, detail::frame_bits(request), std::nullopt, std::nullopt, ""});
    std::vector<Message> replies;
    try {
      replies = transport.exchange(request);
      bool finished = false;
      std::uint64_t chunk_wire = 0, chunk_payload = 0, chunk_count = 0;
      std::optional<ModelOffer> offer;
      for (const Message& reply : replies) {
        if (finished) throw ProtocolError("messages after transfer completed");
        if (const auto* c = std::get_if<ChunkData>(&reply)) {
          chunk_wire += detail::frame_bits(reply);
          chunk_payload += 8 * c->chunk.payload.size();
          ++chunk_count;
        } else if (const auto* o = std::get_if<ModelOffer>(&reply)) {
          offer = *o;
        }
        finished = session.consume(reply);
      }
      if (!finished) throw ProtocolError("transfer ended without completion");

      // table-accounted clock: configuration bits now held minus bits already held
      const std::uint32_t n_now = session.delivered_n();
      const std::uint64_t table_bits_now =
          n_now == 0 ? table_bits_have
                     : detail::table_entry_at(endpoint.table(), scheme, n_now).size_bits;
      const std::uint64_t delta = table_bits_now - table_bits_have;
      t += scenario.link.transfer_time(delta);
      table_bits_have = table_bits_now;
      log.payload_bits += chunk_payload;

      if (offer)
        push({"offer", t, 0, detail::frame_bits(*offer), offer->n, offer->predicted_error, ""});
      if (chunk_count)
        push({"chunks", t, 0, chunk_wire, std::nullopt, std::nullopt,
              std::to_string(chunk_count) + " chunks, " + std::to_string(chunk_payload / 8) +
                  " payload bytes"});
      SimEvent done{"transfer_done", t, delta, 0, n_now, std::nullopt, ""};
      done.wire_bits = detail::frame_bits(Message(TransferDone{n_now}));
      if (offer) done.predicted_error = offer->predicted_error;
      push(done);
      return true;
    } catch (const std::exception& e) {
      // an ErrorReply costs one round trip and ends the session
      t += scenario.link.transfer_time(0);
      std::uint64_t err_wire = 0;
      for (const Message& reply : replies)
        if (std::holds_alternative<ErrorReply>(reply)) err_wire += detail::frame_bits(reply);
      push({"error", t, 0, err_wire, std::nullopt, std::nullopt, e.what()});
      log.failed = true;
      return false;
    }
  };

  if (exchange(session.start(), "request")) {
    for (const UpgradeGoal& goal : scenario.upgrades) {
      Message up = goal.target_error ? session.upgrade_to_error(*goal.target_error)
                                     : session.upgrade_to_depth(goal.target_n.value());
      if (!exchange(up, "upgrade_request")) break;
    }
  }
  log.final_time_s = t;
  log.final_n = session.delivered_n();
  return log;
}

// ---------------------------------------------------------------------------
// Session log CSV

inline std::string session_log_to_csv(const SessionLog& log) {
  std::ostringstream out;
  out.precision(17);
  out << "event,time_s,clock_bits,wire_bits,achievable_n,predicted_error,detail\n";
  for (const SimEvent& ev : log.events) {
    std::string detail = ev.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    out << ev.kind << ',' << ev.time_s << ',' << ev.clock_bits << ',' << ev.wire_bits << ',';
    if (ev.achievable_n) out << *ev.achievable_n;
    out << ',';
    if (ev.predicted_error) out << *ev.predicted_error;
    out << ',' << detail << "\n";
  }
  return out.str();
}

}  // namespace accordion
