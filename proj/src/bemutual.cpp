#include "beacons/bemutual.hpp"

#include <sodium.h>

#include <algorithm>
#include <json.hpp>
#include <stdexcept>

namespace beacons::bemutual {
namespace {

constexpr std::string_view kRequestTag = "beacons/auth-request";
constexpr std::string_view kResponseTag = "beacons/auth-response";
constexpr std::string_view kKeyTag = "beacons/session-key";
constexpr std::string_view kKekTag = "beacons/kek";
constexpr std::string_view kSessionTag = "beacons/session";

void ensure_sodium() {
  if (sodium_init() < 0) throw std::runtime_error("libsodium failed to initialise");
}

Bytes request_body(const AuthRequest& m) {
  ByteWriter w;
  w.str(kRequestTag);
  encode(w, m.target_bcadd);
  encode(w, m.initiator_add);
  encode(w, m.initiator_pk);
  encode(w, m.nonce1);
  return std::move(w).take();
}

Bytes response_body(const AuthResponse& m, const Nonce& nonce1) {
  ByteWriter w;
  w.str(kResponseTag);
  encode(w, m.initiator_bcadd);
  encode(w, m.initiator_add);
  encode(w, m.responder_add);
  encode(w, m.responder_pk);
  encode(w, nonce1);
  encode(w, m.nonce2);
  return std::move(w).take();
}

Bytes key_body(const SessionKeyMsg& m, const Nonce& nonce1) {
  ByteWriter w;
  w.str(kKeyTag);
  encode(w, m.responder_bcadd);
  encode(w, m.responder_add);
  encode(w, m.initiator_add);
  encode(w, nonce1);
  encode(w, m.nonce2);
  encode(w, m.ephemeral);
  w.field(m.key_material);
  return std::move(w).take();
}

Bytes nonce_ad(const Nonce& n1, const Nonce& n2) {
  Bytes ad(n1.bytes.begin(), n1.bytes.end());
  ad.insert(ad.end(), n2.bytes.begin(), n2.bytes.end());
  return ad;
}

// Key-encryption key from an X25519 shared secret, bound to both public values.
ByteArray<32> kek(const ByteArray<32>& shared, const PublicKey& ephemeral, const PublicKey& recipient) {
  ByteWriter w;
  w.str(kKekTag);
  w.field(shared);
  encode(w, ephemeral);
  encode(w, recipient);
  return sha256(w.bytes()).bytes;
}

ByteArray<32> session_key(const ByteArray<32>& material, const Nonce& n1, const Nonce& n2) {
  Bytes in(material.begin(), material.end());
  in.insert(in.end(), n1.bytes.begin(), n1.bytes.end());
  in.insert(in.end(), n2.bytes.begin(), n2.bytes.end());
  return sha256(in).bytes;
}

// Seals `secret` so that only the holder of `recipient`'s signing key can
// open it. The ephemeral scalar comes from the caller's seeded RNG.
std::optional<std::pair<PublicKey, Bytes>> encrypt_to(const PublicKey& recipient, ByteView secret,
                                                      ByteView ad, simnet::Rng& rng) {
  ensure_sodium();
  ByteArray<32> curve_pk{};
  if (crypto_sign_ed25519_pk_to_curve25519(curve_pk.data(), recipient.bytes.data()) != 0) return std::nullopt;
  auto eph_sk = rng.bytes<32>();
  PublicKey eph_pk;
  crypto_scalarmult_base(eph_pk.bytes.data(), eph_sk.data());
  ByteArray<32> shared{};
  if (crypto_scalarmult(shared.data(), eph_sk.data(), curve_pk.data()) != 0) return std::nullopt;
  const auto k = kek(shared, eph_pk, recipient);
  Bytes out(secret.size() + crypto_aead_chacha20poly1305_ietf_ABYTES);
  ByteArray<crypto_aead_chacha20poly1305_ietf_NPUBBYTES> npub{};
  unsigned long long len = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(out.data(), &len, secret.data(), secret.size(), ad.data(),
                                            ad.size(), nullptr, npub.data(), k.data());
  out.resize(len);
  sodium_memzero(eph_sk.data(), eph_sk.size());
  return std::make_pair(eph_pk, std::move(out));
}

std::optional<Bytes> decrypt_with(const Identity& self, const PublicKey& ephemeral, ByteView sealed,
                                  ByteView ad) {
  ensure_sodium();
  ByteArray<32> ed_pk{};
  ByteArray<64> ed_sk{};
  crypto_sign_seed_keypair(ed_pk.data(), ed_sk.data(), self.sk.bytes.data());
  ByteArray<32> curve_sk{};
  crypto_sign_ed25519_sk_to_curve25519(curve_sk.data(), ed_sk.data());
  sodium_memzero(ed_sk.data(), ed_sk.size());
  ByteArray<32> shared{};
  const int rc = crypto_scalarmult(shared.data(), curve_sk.data(), ephemeral.bytes.data());
  sodium_memzero(curve_sk.data(), curve_sk.size());
  if (rc != 0 || sealed.size() < crypto_aead_chacha20poly1305_ietf_ABYTES) return std::nullopt;
  const auto k = kek(shared, ephemeral, self.pk);
  Bytes out(sealed.size());
  ByteArray<crypto_aead_chacha20poly1305_ietf_NPUBBYTES> npub{};
  unsigned long long len = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &len, nullptr, sealed.data(), sealed.size(),
                                                ad.data(), ad.size(), npub.data(), k.data()) != 0) {
    return std::nullopt;
  }
  out.resize(len);
  return out;
}

Nonce fresh_nonce(simnet::Rng& rng) { return Nonce{rng.bytes<16>()}; }

// Nonce for channel traffic: direction byte, zero padding, big-endian seq.
ByteArray<crypto_aead_chacha20poly1305_ietf_NPUBBYTES> channel_nonce(bool from_initiator,
                                                                     std::uint64_t seq) {
  ByteArray<crypto_aead_chacha20poly1305_ietf_NPUBBYTES> n{};
  n[0] = from_initiator ? 1 : 2;
  for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(seq >> (56 - 8 * i));
  return n;
}

Bytes channel_ad(const Session& s, bool from_initiator, std::uint64_t seq) {
  ByteWriter w;
  w.str(kSessionTag);
  const auto& init = s.initiator ? s.local : s.peer;
  const auto& resp = s.initiator ? s.peer : s.local;
  encode(w, init);
  encode(w, resp);
  w.u8(from_initiator ? 1 : 2);
  w.u64(seq);
  return std::move(w).take();
}

}  // namespace

const char* to_string(HandshakeError e) {
  switch (e) {
    case HandshakeError::PeerUnresolvable: return "PeerUnresolvable";
    case HandshakeError::BadSignature: return "BadSignature";
    case HandshakeError::IdentityMismatch: return "IdentityMismatch";
    case HandshakeError::ReplayDetected: return "ReplayDetected";
    case HandshakeError::WrongTarget: return "WrongTarget";
    case HandshakeError::UnknownHandshake: return "UnknownHandshake";
    case HandshakeError::DecryptFailed: return "DecryptFailed";
    case HandshakeError::NoGateway: return "NoGateway";
    case HandshakeError::HandshakeFailed: return "HandshakeFailed";
    case HandshakeError::AuthFailure: return "AuthFailure";
  }
  return "?";
}

Bytes encode(const AuthRequest& m) {
  ByteWriter w;
  encode(w, m.target_bcadd);
  encode(w, m.initiator_add);
  encode(w, m.initiator_pk);
  encode(w, m.nonce1);
  encode(w, m.sig);
  return std::move(w).take();
}

Bytes encode(const AuthResponse& m) {
  ByteWriter w;
  encode(w, m.initiator_bcadd);
  encode(w, m.initiator_add);
  encode(w, m.responder_add);
  encode(w, m.responder_pk);
  encode(w, m.nonce2);
  encode(w, m.sig);
  return std::move(w).take();
}

Bytes encode(const SessionKeyMsg& m) {
  ByteWriter w;
  encode(w, m.responder_bcadd);
  encode(w, m.responder_add);
  encode(w, m.initiator_add);
  encode(w, m.nonce2);
  encode(w, m.ephemeral);
  w.field(m.key_material);
  encode(w, m.sig);
  return std::move(w).take();
}

AuthRequest decode_auth_request(ByteView b) {
  ByteReader r(b);
  AuthRequest m;
  m.target_bcadd = decode_address(r);
  m.initiator_add = decode_network_address(r);
  m.initiator_pk = PublicKey{r.fixed<32>()};
  m.nonce1 = Nonce{r.fixed<16>()};
  m.sig = Signature{r.fixed<64>()};
  r.expect_done();
  return m;
}

AuthResponse decode_auth_response(ByteView b) {
  ByteReader r(b);
  AuthResponse m;
  m.initiator_bcadd = decode_address(r);
  m.initiator_add = decode_network_address(r);
  m.responder_add = decode_network_address(r);
  m.responder_pk = PublicKey{r.fixed<32>()};
  m.nonce2 = Nonce{r.fixed<16>()};
  m.sig = Signature{r.fixed<64>()};
  r.expect_done();
  return m;
}

SessionKeyMsg decode_session_key(ByteView b) {
  ByteReader r(b);
  SessionKeyMsg m;
  m.responder_bcadd = decode_address(r);
  m.responder_add = decode_network_address(r);
  m.initiator_add = decode_network_address(r);
  m.nonce2 = Nonce{r.fixed<16>()};
  m.ephemeral = PublicKey{r.fixed<32>()};
  m.key_material = r.field();
  m.sig = Signature{r.fixed<64>()};
  r.expect_done();
  return m;
}

void HandshakeLog::record(std::uint64_t tick, std::string_view kind, const BlockchainAddress& from,
                          const BlockchainAddress& to, const Nonce* nonce1, const Nonce* nonce2) {
  nlohmann::json j{{"tick", tick}, {"kind", kind}, {"from", from.hex()}, {"to", to.hex()}};
  if (nonce1) j["nonce1"] = to_hex(nonce1->bytes);
  if (nonce2) j["nonce2"] = to_hex(nonce2->bytes);
  lines_.push_back(j.dump());
}

Expected<Initiator, HandshakeError> Initiator::initiate(const LocalEndpoint& local,
                                                        const BlockchainAddress& peer,
                                                        const bedns::Ledger* ledger,
                                                        bool direct_neighbor, simnet::Rng& rng) {
  Initiator h;
  h.local_ = local;
  h.peer_ = peer;
  h.ledger_ = ledger;
  if (!direct_neighbor) {
    if (!ledger) return unexpected(HandshakeError::PeerUnresolvable);
    auto rec = ledger->resolve(peer);
    if (!rec) return unexpected(HandshakeError::PeerUnresolvable);
    h.peer_add_ = bedns::subject_address(*rec);
    if (!h.peer_add_) return unexpected(HandshakeError::PeerUnresolvable);
  }
  h.request_.target_bcadd = peer;
  h.request_.initiator_add = local.add;
  h.request_.initiator_pk = local.id.pk;
  h.request_.nonce1 = fresh_nonce(rng);
  h.request_.sig = local.id.sign(request_body(h.request_));
  return h;
}

Expected<std::pair<SessionKeyMsg, Session>, HandshakeError> Initiator::finalize(
    const AuthResponse& resp, simnet::Rng& rng, Timestamp now) {
  if (done_) return unexpected(HandshakeError::ReplayDetected);
  // A response must be about this exact request and come from the key that
  // hashes to the peer we asked for.
  if (resp.initiator_bcadd != local_.id.bcadd || resp.initiator_add != local_.add) {
    return unexpected(HandshakeError::IdentityMismatch);
  }
  if (address_of(resp.responder_pk) != peer_) return unexpected(HandshakeError::IdentityMismatch);
  if (!verify(resp.responder_pk, response_body(resp, request_.nonce1), resp.sig)) {
    return unexpected(HandshakeError::BadSignature);
  }
  if (peer_add_ && *peer_add_ != resp.responder_add) return unexpected(HandshakeError::IdentityMismatch);

  const auto material = rng.bytes<32>();
  const auto ad = nonce_ad(request_.nonce1, resp.nonce2);
  auto sealed = encrypt_to(resp.responder_pk, material, ad, rng);
  if (!sealed) return unexpected(HandshakeError::HandshakeFailed);

  SessionKeyMsg msg;
  msg.responder_bcadd = peer_;
  msg.responder_add = resp.responder_add;
  msg.initiator_add = local_.add;
  msg.nonce2 = resp.nonce2;
  msg.ephemeral = sealed->first;
  msg.key_material = std::move(sealed->second);
  msg.sig = local_.id.sign(key_body(msg, request_.nonce1));

  Session s;
  s.local = local_.id.bcadd;
  s.peer = peer_;
  s.key = session_key(material, request_.nonce1, resp.nonce2);
  s.nonce1 = request_.nonce1;
  s.nonce2 = resp.nonce2;
  s.established_at = now;
  s.initiator = true;
  done_ = true;
  return std::make_pair(std::move(msg), std::move(s));
}

Expected<AuthResponse, HandshakeError> Responder::respond(const AuthRequest& req, bool direct_neighbor,
                                                          simnet::Rng& rng) {
  if (req.target_bcadd != local_.id.bcadd) return unexpected(HandshakeError::WrongTarget);
  if (!verify(req.initiator_pk, request_body(req), req.sig)) return unexpected(HandshakeError::BadSignature);
  const auto initiator = address_of(req.initiator_pk);
  if (seen_nonces_[initiator].count(req.nonce1)) return unexpected(HandshakeError::ReplayDetected);
  if (!direct_neighbor) {
    if (!ledger_) return unexpected(HandshakeError::PeerUnresolvable);
    auto rec = ledger_->resolve(initiator);
    if (!rec) return unexpected(HandshakeError::PeerUnresolvable);
    auto add = bedns::subject_address(*rec);
    if (!add || *add != req.initiator_add) return unexpected(HandshakeError::IdentityMismatch);
  }
  seen_nonces_[initiator].insert(req.nonce1);

  AuthResponse resp;
  resp.initiator_bcadd = initiator;
  resp.initiator_add = req.initiator_add;
  resp.responder_add = local_.add;
  resp.responder_pk = local_.id.pk;
  resp.nonce2 = fresh_nonce(rng);
  resp.sig = local_.id.sign(response_body(resp, req.nonce1));
  pending_[resp.nonce2] = Pending{req.initiator_pk, req.initiator_add, req.nonce1, resp.nonce2};
  return resp;
}

Expected<Session, HandshakeError> Responder::accept(const SessionKeyMsg& msg, Timestamp now) {
  auto it = pending_.find(msg.nonce2);
  if (it == pending_.end()) return unexpected(HandshakeError::UnknownHandshake);
  const Pending p = it->second;
  if (msg.responder_bcadd != local_.id.bcadd || msg.responder_add != local_.add) {
    return unexpected(HandshakeError::WrongTarget);
  }
  if (msg.initiator_add != p.initiator_add) return unexpected(HandshakeError::IdentityMismatch);
  if (!verify(p.initiator_pk, key_body(msg, p.nonce1), msg.sig)) return unexpected(HandshakeError::BadSignature);
  auto material = decrypt_with(local_.id, msg.ephemeral, msg.key_material, nonce_ad(p.nonce1, p.nonce2));
  if (!material || material->size() != 32) return unexpected(HandshakeError::DecryptFailed);
  pending_.erase(it);

  ByteArray<32> m{};
  std::copy(material->begin(), material->end(), m.begin());
  Session s;
  s.local = local_.id.bcadd;
  s.peer = address_of(p.initiator_pk);
  s.key = session_key(m, p.nonce1, p.nonce2);
  s.nonce1 = p.nonce1;
  s.nonce2 = p.nonce2;
  s.established_at = now;
  s.initiator = false;
  return s;
}

Expected<SessionPair, HandshakeError> handshake(const LocalEndpoint& initiator, Responder& responder,
                                                const bedns::Ledger* ledger, bool direct_neighbor,
                                                simnet::Rng& rng, Timestamp now, HandshakeLog* log) {
  const auto& a = initiator.id.bcadd;
  const auto& b = responder.local().id.bcadd;
  auto init = Initiator::initiate(initiator, b, ledger, direct_neighbor, rng);
  if (!init) return unexpected(init.error());
  if (log) log->record(now.ticks, "AuthRequest", a, b, &init->request().nonce1, nullptr);
  auto resp = responder.respond(init->request(), direct_neighbor, rng);
  if (!resp) return unexpected(resp.error());
  if (log) log->record(now.ticks, "AuthResponse", b, a, &init->request().nonce1, &resp->nonce2);
  auto fin = init->finalize(*resp, rng, now);
  if (!fin) return unexpected(fin.error());
  if (log) log->record(now.ticks, "SessionKey", a, b, &fin->second.nonce1, &fin->second.nonce2);
  auto acc = responder.accept(fin->first, now);
  if (!acc) return unexpected(acc.error());
  return SessionPair{std::move(fin->second), std::move(*acc)};
}

Sealed Channel::seal(ByteView plaintext) {
  ensure_sodium();
  Sealed out;
  out.seq = ++sent_;
  const bool from_initiator = session_.initiator;
  const auto npub = channel_nonce(from_initiator, out.seq);
  const auto ad = channel_ad(session_, from_initiator, out.seq);
  out.ciphertext.resize(plaintext.size() + crypto_aead_chacha20poly1305_ietf_ABYTES);
  unsigned long long len = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(out.ciphertext.data(), &len, plaintext.data(), plaintext.size(),
                                            ad.data(), ad.size(), nullptr, npub.data(), session_.key.data());
  out.ciphertext.resize(len);
  return out;
}

Expected<Bytes, HandshakeError> Channel::open(const Sealed& sealed) {
  ensure_sodium();
  // Replays and reordering are both rejected: sequence numbers only move up.
  if (sealed.seq <= received_) return unexpected(HandshakeError::AuthFailure);
  if (sealed.ciphertext.size() < crypto_aead_chacha20poly1305_ietf_ABYTES) {
    return unexpected(HandshakeError::AuthFailure);
  }
  const bool from_initiator = !session_.initiator;
  const auto npub = channel_nonce(from_initiator, sealed.seq);
  const auto ad = channel_ad(session_, from_initiator, sealed.seq);
  Bytes out(sealed.ciphertext.size());
  unsigned long long len = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &len, nullptr, sealed.ciphertext.data(),
                                                sealed.ciphertext.size(), ad.data(), ad.size(), npub.data(),
                                                session_.key.data()) != 0) {
    return unexpected(HandshakeError::AuthFailure);
  }
  out.resize(len);
  received_ = sealed.seq;
  return out;
}

namespace {

Bytes encode_sealed(const Sealed& s) {
  ByteWriter w;
  w.u64(s.seq);
  w.field(s.ciphertext);
  return std::move(w).take();
}

Sealed decode_sealed(ByteView b) {
  ByteReader r(b);
  Sealed s;
  s.seq = r.u64();
  s.ciphertext = r.field();
  r.expect_done();
  return s;
}

}  // namespace

Expected<Bytes, HandshakeError> RelayedPath::carry(ByteView payload, bool forward) {
  // Hop i links nodes_[i] and nodes_[i + 1]. Each intermediate node unwraps
  // one hop and rewraps into the next; what it sees is recorded.
  const std::size_t n = hops_.size();
  Bytes current(payload.begin(), payload.end());
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = forward ? step : n - 1 - step;
    auto& sender = forward ? hops_[i].near : hops_[i].far;
    auto& receiver = forward ? hops_[i].far : hops_[i].near;
    auto opened = receiver.open(sender.seal(current));
    if (!opened) return opened;
    current = std::move(*opened);
    const bool at_endpoint = forward ? (i + 1 == n) : (i == 0);
    if (!at_endpoint) nodes_.at(forward ? i + 1 : i)->forwarded.push_back(current);
  }
  return current;
}

Expected<Bytes, HandshakeError> RelayedPath::send_to_destination(ByteView plaintext) {
  auto wire = carry(encode_sealed(src_.seal(plaintext)), true);
  if (!wire) return wire;
  try {
    return dst_.open(decode_sealed(*wire));
  } catch (const DecodeError&) {
    return unexpected(HandshakeError::AuthFailure);
  }
}

Expected<Bytes, HandshakeError> RelayedPath::send_to_source(ByteView plaintext) {
  auto wire = carry(encode_sealed(dst_.seal(plaintext)), false);
  if (!wire) return wire;
  try {
    return src_.open(decode_sealed(*wire));
  } catch (const DecodeError&) {
    return unexpected(HandshakeError::AuthFailure);
  }
}

Expected<RelayedPath, HandshakeError> relay_connect(
    UnitNode& src, std::span<UnitNode* const> src_gateways, const BlockchainAddress& dst_vehicle,
    const BlockchainAddress& dst_unit, const std::function<UnitNode*(const BlockchainAddress&)>& locate,
    const bedns::Ledger& ledger, simnet::Rng& rng, Timestamp now, HandshakeLog* log) {
  if (src_gateways.empty()) return unexpected(HandshakeError::NoGateway);
  UnitNode* gw_a = src_gateways.front();

  // The destination's Class III record names its gateway.
  auto found = ledger.search(dst_vehicle, bedns::RecordClass::III);
  if (!found) return unexpected(HandshakeError::PeerUnresolvable);
  std::optional<BlockchainAddress> gw_b_addr;
  for (const auto& rec : *found) {
    if (rec.bcadd_uiia == dst_unit) gw_b_addr = rec.bcadd_ui;
  }
  if (!gw_b_addr) return unexpected(HandshakeError::PeerUnresolvable);
  UnitNode* gw_b = locate(*gw_b_addr);
  UnitNode* dst = locate(dst_unit);
  if (!gw_b || !dst) return unexpected(HandshakeError::PeerUnresolvable);

  // Hop sessions: intra-vehicle legs are direct, the gateway leg resolves
  // both gateways through their Class II records.
  auto leg1 = handshake(src.endpoint, gw_a->responder, &ledger, true, rng, now, log);
  if (!leg1) return unexpected(leg1.error());
  auto leg2 = handshake(gw_a->endpoint, gw_b->responder, &ledger, false, rng, now, log);
  if (!leg2) return unexpected(leg2.error());
  auto leg3 = handshake(gw_b->endpoint, dst->responder, &ledger, true, rng, now, log);
  if (!leg3) return unexpected(leg3.error());

  RelayedPath path(Channel(Session{}), Channel(Session{}));
  path.hops_.push_back({Channel(leg1->initiator), Channel(leg1->responder)});
  path.hops_.push_back({Channel(leg2->initiator), Channel(leg2->responder)});
  path.hops_.push_back({Channel(leg3->initiator), Channel(leg3->responder)});
  path.nodes_ = {&src, gw_a, gw_b, dst};

  // End-to-end handshake, every message carried inside the hop sessions.
  auto init = Initiator::initiate(src.endpoint, dst_unit, &ledger, false, rng);
  if (!init) return unexpected(init.error());
  const auto& a = src.endpoint.id.bcadd;
  if (log) log->record(now.ticks, "AuthRequest", a, dst_unit, &init->request().nonce1, nullptr);
  auto req_wire = path.carry(encode(init->request()), true);
  if (!req_wire) return unexpected(HandshakeError::HandshakeFailed);
  auto resp = dst->responder.respond(decode_auth_request(*req_wire), false, rng);
  if (!resp) return unexpected(resp.error());
  if (log) log->record(now.ticks, "AuthResponse", dst_unit, a, &init->request().nonce1, &resp->nonce2);
  auto resp_wire = path.carry(encode(*resp), false);
  if (!resp_wire) return unexpected(HandshakeError::HandshakeFailed);
  auto fin = init->finalize(decode_auth_response(*resp_wire), rng, now);
  if (!fin) return unexpected(fin.error());
  if (log) log->record(now.ticks, "SessionKey", a, dst_unit, &fin->second.nonce1, &fin->second.nonce2);
  auto key_wire = path.carry(encode(fin->first), true);
  if (!key_wire) return unexpected(HandshakeError::HandshakeFailed);
  auto acc = dst->responder.accept(decode_session_key(*key_wire), now);
  if (!acc) return unexpected(acc.error());

  const std::vector<BlockchainAddress> relays{gw_a->endpoint.id.bcadd, gw_b->endpoint.id.bcadd};
  fin->second.relay_path = relays;
  acc->relay_path = relays;
  path.src_ = Channel(std::move(fin->second));
  path.dst_ = Channel(std::move(*acc));
  return path;
}

}  // namespace beacons::bemutual
