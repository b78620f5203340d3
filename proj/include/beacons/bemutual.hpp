#pragma once

// Certificateless mutual authentication: three signed messages (request,
// response, session key) checked against the name-service ledger, plus sealed
// session traffic and relaying through Type I gateways.

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "beacons/bedns.hpp"
#include "beacons/expected.hpp"
#include "beacons/identity.hpp"
#include "beacons/simnet/rng.hpp"

namespace beacons::bemutual {

enum class HandshakeError {
  PeerUnresolvable,
  BadSignature,
  IdentityMismatch,
  ReplayDetected,
  WrongTarget,
  UnknownHandshake,
  DecryptFailed,
  NoGateway,
  HandshakeFailed,
  AuthFailure,
};

const char* to_string(HandshakeError e);

/// An identity plus the interface it speaks on.
struct LocalEndpoint {
  Identity id;
  NetworkAddress add;
};

struct AuthRequest {
  BlockchainAddress target_bcadd;
  NetworkAddress initiator_add;
  PublicKey initiator_pk;
  Nonce nonce1;
  Signature sig;
};

struct AuthResponse {
  BlockchainAddress initiator_bcadd;
  NetworkAddress initiator_add;
  NetworkAddress responder_add;
  PublicKey responder_pk;
  Nonce nonce2;
  Signature sig;  // also covers the request's nonce1
};

struct SessionKeyMsg {
  BlockchainAddress responder_bcadd;
  NetworkAddress responder_add;
  NetworkAddress initiator_add;
  Nonce nonce2;
  PublicKey ephemeral;  // X25519 ephemeral public key
  Bytes key_material;   // AEAD ciphertext of the 32-byte secret
  Signature sig;        // by the initiator
};

Bytes encode(const AuthRequest& m);
Bytes encode(const AuthResponse& m);
Bytes encode(const SessionKeyMsg& m);
AuthRequest decode_auth_request(ByteView b);
AuthResponse decode_auth_response(ByteView b);
SessionKeyMsg decode_session_key(ByteView b);

struct Session {
  BlockchainAddress local;
  BlockchainAddress peer;
  ByteArray<32> key{};
  Nonce nonce1;
  Nonce nonce2;
  Timestamp established_at;
  std::vector<BlockchainAddress> relay_path;
  bool initiator = false;
};

/// Receives one line per handshake message; used for JSON-lines traces.
class HandshakeLog {
 public:
  void record(std::uint64_t tick, std::string_view kind, const BlockchainAddress& from,
              const BlockchainAddress& to, const Nonce* nonce1, const Nonce* nonce2);
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::vector<std::string> lines_;
};

/// Initiating side of one handshake attempt.
class Initiator {
 public:
  /// With `direct_neighbor`, the peer is on a direct wireless link and no
  /// ledger lookup happens; otherwise the peer must resolve in `ledger`.
  static Expected<Initiator, HandshakeError> initiate(const LocalEndpoint& local,
                                                      const BlockchainAddress& peer,
                                                      const bedns::Ledger* ledger,
                                                      bool direct_neighbor, simnet::Rng& rng);

  const AuthRequest& request() const { return request_; }

  Expected<std::pair<SessionKeyMsg, Session>, HandshakeError> finalize(const AuthResponse& resp,
                                                                       simnet::Rng& rng,
                                                                       Timestamp now);

 private:
  Initiator() = default;

  LocalEndpoint local_;
  BlockchainAddress peer_;
  std::optional<NetworkAddress> peer_add_;  // resolved address, absent for neighbours
  const bedns::Ledger* ledger_ = nullptr;
  AuthRequest request_;
  bool done_ = false;
};

/// Responding side. Long-lived per endpoint: it owns the replay cache.
class Responder {
 public:
  Responder(LocalEndpoint local, const bedns::Ledger* ledger)
      : local_(std::move(local)), ledger_(ledger) {}

  const LocalEndpoint& local() const { return local_; }

  Expected<AuthResponse, HandshakeError> respond(const AuthRequest& req, bool direct_neighbor,
                                                 simnet::Rng& rng);
  Expected<Session, HandshakeError> accept(const SessionKeyMsg& msg, Timestamp now);

 private:
  struct Pending {
    PublicKey initiator_pk;
    NetworkAddress initiator_add;
    Nonce nonce1;
    Nonce nonce2;
  };

  LocalEndpoint local_;
  const bedns::Ledger* ledger_;
  std::map<BlockchainAddress, std::set<Nonce>> seen_nonces_;
  std::map<Nonce, Pending> pending_;  // keyed by nonce2
};

/// Both ends of a completed handshake.
struct SessionPair {
  Session initiator;
  Session responder;
};

/// Runs the three messages between an initiator and a responder in-process.
Expected<SessionPair, HandshakeError> handshake(const LocalEndpoint& initiator, Responder& responder,
                                                const bedns::Ledger* ledger, bool direct_neighbor,
                                                simnet::Rng& rng, Timestamp now,
                                                HandshakeLog* log = nullptr);

struct Sealed {
  std::uint64_t seq = 0;
  Bytes ciphertext;
};

/// Sealed traffic over an established session: AEAD keyed by the session key,
/// explicit 64-bit sequence numbers, strictly increasing on receipt.
class Channel {
 public:
  explicit Channel(Session session) : session_(std::move(session)) {}

  Sealed seal(ByteView plaintext);
  Expected<Bytes, HandshakeError> open(const Sealed& sealed);
  const Session& session() const { return session_; }

 private:
  Session session_;
  std::uint64_t sent_ = 0;
  std::uint64_t received_ = 0;
};

/// A Type I or Type IIA unit that takes part in relayed sessions.
struct UnitNode {
  UnitNode(LocalEndpoint local, BlockchainAddress vehicle, const bedns::Ledger* ledger)
      : endpoint(local), vehicle(vehicle), responder(std::move(local), ledger) {}

  LocalEndpoint endpoint;
  BlockchainAddress vehicle;
  Responder responder;
  /// Every plaintext byte string this unit unwrapped while forwarding.
  std::vector<Bytes> forwarded;
};

/// End-to-end session between two Type IIA units on different vehicles,
/// carried over three hops: src -> gateway A -> gateway B -> dst.
class RelayedPath {
 public:
  const Session& source_session() const { return src_.session(); }
  const Session& destination_session() const { return dst_.session(); }

  /// Seal end-to-end at the source, forward through both gateways, open at
  /// the destination.
  Expected<Bytes, HandshakeError> send_to_destination(ByteView plaintext);
  Expected<Bytes, HandshakeError> send_to_source(ByteView plaintext);

 private:
  friend Expected<RelayedPath, HandshakeError> relay_connect(
      UnitNode&, std::span<UnitNode* const>, const BlockchainAddress&, const BlockchainAddress&,
      const std::function<UnitNode*(const BlockchainAddress&)>&, const bedns::Ledger&,
      simnet::Rng&, Timestamp, HandshakeLog*);

  struct HopEnds {
    Channel near;  // end closer to the source
    Channel far;
  };

  RelayedPath(Channel src, Channel dst) : src_(std::move(src)), dst_(std::move(dst)) {}

  Expected<Bytes, HandshakeError> carry(ByteView payload, bool forward);

  Channel src_;
  Channel dst_;
  std::vector<HopEnds> hops_;
  std::vector<UnitNode*> nodes_;  // src, gateway A, gateway B, dst
};

/// `locate` plays the role of the physical network: it hands back the unit
/// answering at a BCADD, or nullptr. Only the destination's Class III record
/// tells the source which gateway to go through.
Expected<RelayedPath, HandshakeError> relay_connect(
    UnitNode& src, std::span<UnitNode* const> src_gateways, const BlockchainAddress& dst_vehicle,
    const BlockchainAddress& dst_unit, const std::function<UnitNode*(const BlockchainAddress&)>& locate,
    const bedns::Ledger& ledger, simnet::Rng& rng, Timestamp now, HandshakeLog* log = nullptr);

}  // namespace beacons::bemutual
