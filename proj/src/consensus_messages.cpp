#include "beacons/consensus/messages.hpp"

#include <json.hpp>

namespace beacons::consensus {
namespace {

constexpr std::string_view kRequestTag = "beacons/request";
constexpr std::string_view kMessageTag = "beacons/consensus";

void encode(ByteWriter& w, const NodeId& n) {
  beacons::encode(w, n.bcadd);
  w.u32(n.ordinal);
}

NodeId decode_node(ByteReader& r) {
  NodeId n;
  n.bcadd = decode_address(r);
  n.ordinal = r.u32();
  return n;
}

template <typename T, typename F>
void encode_opt(ByteWriter& w, const std::optional<T>& v, F&& f) {
  w.u8(v ? 1 : 0);
  if (v) f(*v);
}

template <typename F>
auto decode_opt(ByteReader& r, F&& f) -> std::optional<decltype(f())> {
  const auto tag = r.u8();
  if (tag > 1) throw DecodeError("bad presence byte");
  if (!tag) return std::nullopt;
  return f();
}

void encode_request_body(ByteWriter& w, const Request& r) {
  w.u8(static_cast<std::uint8_t>(r.kind));
  beacons::encode(w, r.client);
  w.u64(r.id);
  encode_opt(w, r.subject, [&](const NodeId& n) { encode(w, n); });
  w.field(r.operation);
}

Request decode_request(ByteReader& r) {
  Request q;
  const auto kind = r.u8();
  if (kind < 1 || kind > 4) throw DecodeError("bad request kind");
  q.kind = static_cast<RequestKind>(kind);
  q.client = decode_address(r);
  q.id = r.u64();
  q.subject = decode_opt(r, [&] { return decode_node(r); });
  q.operation = r.field();
  q.client_pk = PublicKey{r.fixed<32>()};
  q.client_sig = Signature{r.fixed<64>()};
  return q;
}

Bytes request_signing_bytes(const Request& r) {
  ByteWriter w;
  w.str(kRequestTag);
  encode_request_body(w, r);
  return std::move(w).take();
}

void encode_block(ByteWriter& w, const bedns::Block& b) {
  w.u64(b.height);
  beacons::encode(w, b.prev_hash);
  w.u32(static_cast<std::uint32_t>(b.records.size()));
  for (const auto& rec : b.records) bedns::encode(w, rec);
  beacons::encode(w, b.block_hash);
}

bedns::Block decode_block(ByteReader& r) {
  bedns::Block b;
  b.height = r.u64();
  b.prev_hash = Digest{r.fixed<32>()};
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) b.records.push_back(bedns::decode_record(r));
  b.block_hash = Digest{r.fixed<32>()};
  return b;
}

Snapshot decode_snapshot(ByteReader& r) {
  Snapshot s;
  s.view = r.u64();
  s.primary = decode_node(r);
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) s.members.push_back(decode_node(r));
  s.last_executed = r.u64();
  const auto m = r.u32();
  for (std::uint32_t i = 0; i < m; ++i) {
    auto a = decode_address(r);
    s.client_marks.emplace_back(a, r.u64());
  }
  const auto b = r.u32();
  for (std::uint32_t i = 0; i < b; ++i) s.blocks.push_back(decode_block(r));
  return s;
}

void encode_unsigned(ByteWriter& w, const Message& m) {
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.u64(m.view);
  w.u64(m.seq);
  beacons::encode(w, m.sender);
  beacons::encode(w, m.sender_pk);
  encode_opt(w, m.request, [&](const Request& r) { encode(w, r); });
  beacons::encode(w, m.digest);
  w.u8(m.ok ? 1 : 0);
  encode_opt(w, m.node, [&](const NodeId& n) { encode(w, n); });
  w.u64(m.last_executed);
  w.u32(static_cast<std::uint32_t>(m.proofs.size()));
  for (const auto& p : m.proofs) {
    encode(w, p.preprepare);
    w.u32(static_cast<std::uint32_t>(p.prepares.size()));
    for (const auto& q : p.prepares) encode(w, q);
  }
  w.u32(static_cast<std::uint32_t>(m.view_changes.size()));
  for (const auto& v : m.view_changes) encode(w, v);
  w.u32(static_cast<std::uint32_t>(m.preprepares.size()));
  for (const auto& v : m.preprepares) encode(w, v);
  encode_opt(w, m.snapshot, [&](const Snapshot& s) { encode(w, s); });
}

Message decode_message(ByteReader& r) {
  Message m;
  const auto kind = r.u8();
  if (kind < 1 || kind > static_cast<std::uint8_t>(MsgKind::Welcome)) throw DecodeError("bad message kind");
  m.kind = static_cast<MsgKind>(kind);
  m.view = r.u64();
  m.seq = r.u64();
  m.sender = decode_address(r);
  m.sender_pk = PublicKey{r.fixed<32>()};
  m.request = decode_opt(r, [&] { return decode_request(r); });
  m.digest = Digest{r.fixed<32>()};
  m.ok = r.u8() != 0;
  m.node = decode_opt(r, [&] { return decode_node(r); });
  m.last_executed = r.u64();
  const auto np = r.u32();
  for (std::uint32_t i = 0; i < np; ++i) {
    PreparedProof p;
    p.preprepare = decode_message(r);
    const auto nq = r.u32();
    for (std::uint32_t k = 0; k < nq; ++k) p.prepares.push_back(decode_message(r));
    m.proofs.push_back(std::move(p));
  }
  const auto nv = r.u32();
  for (std::uint32_t i = 0; i < nv; ++i) m.view_changes.push_back(decode_message(r));
  const auto npp = r.u32();
  for (std::uint32_t i = 0; i < npp; ++i) m.preprepares.push_back(decode_message(r));
  m.snapshot = decode_opt(r, [&] { return decode_snapshot(r); });
  m.sig = Signature{r.fixed<64>()};
  return m;
}

}  // namespace

const char* to_string(RequestKind k) {
  switch (k) {
    case RequestKind::Absorb: return "Absorb";
    case RequestKind::Expel: return "Expel";
    case RequestKind::Operation: return "Operation";
    case RequestKind::Noop: return "Noop";
  }
  return "?";
}

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::Heartbeat: return "Heartbeat";
    case MsgKind::ReqAbs: return "ReqAbs";
    case MsgKind::ReqExp: return "ReqExp";
    case MsgKind::ReqOp: return "ReqOp";
    case MsgKind::PrePrepare: return "PrePrepare";
    case MsgKind::Prepare: return "Prepare";
    case MsgKind::Commit: return "Commit";
    case MsgKind::Reply: return "Reply";
    case MsgKind::ViewChange: return "ViewChange";
    case MsgKind::NewView: return "NewView";
    case MsgKind::Welcome: return "Welcome";
  }
  return "?";
}

Request make_request(const Identity& client, RequestKind kind, std::uint64_t id,
                     std::optional<NodeId> subject, Bytes operation) {
  Request r;
  r.kind = kind;
  r.client = client.bcadd;
  r.id = id;
  r.subject = std::move(subject);
  r.operation = std::move(operation);
  r.client_pk = client.pk;
  r.client_sig = client.sign(request_signing_bytes(r));
  return r;
}

Request noop_request() { return Request{}; }

bool request_authentic(const Request& r) {
  if (r.kind == RequestKind::Noop) {
    return r.client == BlockchainAddress{} && r.id == 0 && !r.subject && r.operation.empty() &&
           r.client_pk == PublicKey{} && r.client_sig == Signature{};
  }
  if ((r.kind == RequestKind::Absorb || r.kind == RequestKind::Expel) != r.subject.has_value()) return false;
  return address_of(r.client_pk) == r.client && verify(r.client_pk, request_signing_bytes(r), r.client_sig);
}

void encode(ByteWriter& w, const Request& r) {
  encode_request_body(w, r);
  beacons::encode(w, r.client_pk);
  beacons::encode(w, r.client_sig);
}

Digest digest_of(const Request& r) {
  ByteWriter w;
  w.str(kRequestTag);
  encode(w, r);
  return sha256(w.bytes());
}

Bytes encode_ledger_op(LedgerOp op, const bedns::MappingRecord& record) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(op));
  bedns::encode(w, record);
  return std::move(w).take();
}

std::pair<LedgerOp, bedns::MappingRecord> decode_ledger_op(ByteView b) {
  ByteReader r(b);
  const auto op = r.u8();
  if (op != 1 && op != 2) throw DecodeError("bad ledger op");
  auto rec = bedns::decode_record(r);
  r.expect_done();
  return {static_cast<LedgerOp>(op), std::move(rec)};
}

void encode(ByteWriter& w, const Snapshot& s) {
  w.u64(s.view);
  encode(w, s.primary);
  w.u32(static_cast<std::uint32_t>(s.members.size()));
  for (const auto& n : s.members) encode(w, n);
  w.u64(s.last_executed);
  w.u32(static_cast<std::uint32_t>(s.client_marks.size()));
  for (const auto& [a, id] : s.client_marks) {
    beacons::encode(w, a);
    w.u64(id);
  }
  w.u32(static_cast<std::uint32_t>(s.blocks.size()));
  for (const auto& b : s.blocks) encode_block(w, b);
}

Digest digest_of(const Snapshot& s) {
  ByteWriter w;
  encode(w, s);
  return sha256(w.bytes());
}

void encode(ByteWriter& w, const Message& m) {
  encode_unsigned(w, m);
  beacons::encode(w, m.sig);
}

Bytes encode(const Message& m) {
  ByteWriter w;
  encode(w, m);
  return std::move(w).take();
}

Message decode_message(ByteView b) {
  ByteReader r(b);
  auto m = decode_message(r);
  r.expect_done();
  return m;
}

Bytes signing_bytes(const Message& m) {
  ByteWriter w;
  w.str(kMessageTag);
  encode_unsigned(w, m);
  return std::move(w).take();
}

void sign_message(Message& m, const Identity& sender) {
  m.sender = sender.bcadd;
  m.sender_pk = sender.pk;
  m.sig = sender.sign(signing_bytes(m));
}

bool message_authentic(const Message& m) {
  return address_of(m.sender_pk) == m.sender && verify(m.sender_pk, signing_bytes(m), m.sig);
}

Digest trace_digest(const Message& m) {
  if (m.request) return digest_of(*m.request);
  if (m.snapshot) return digest_of(*m.snapshot);
  return m.digest;
}

std::string trace_line(std::uint64_t tick, const Message& m) {
  nlohmann::json j{{"tick", tick},
                   {"kind", to_string(m.kind)},
                   {"sender", m.sender.hex()},
                   {"view", m.view},
                   {"seq", m.seq},
                   {"digest", trace_digest(m).hex()}};
  return j.dump();
}

}  // namespace beacons::consensus
