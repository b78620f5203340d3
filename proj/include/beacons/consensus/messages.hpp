#pragma once

// Wire types for the RSU group: client requests, the three PBFT phases,
// replies, primary-excluding view changes and state transfer to absorbed
// members. Every message is signed by its sender.

#include <optional>
#include <string>
#include <vector>

#include "beacons/bedns.hpp"
#include "beacons/identity.hpp"

namespace beacons::consensus {

struct NodeId {
  BlockchainAddress bcadd;
  std::uint32_t ordinal = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class RequestKind : std::uint8_t { Absorb = 1, Expel = 2, Operation = 3, Noop = 4 };

const char* to_string(RequestKind k);

/// Something a client asks the group to order. Noop fills sequence gaps after
/// a view change and carries no client signature.
struct Request {
  RequestKind kind = RequestKind::Noop;
  BlockchainAddress client;
  std::uint64_t id = 0;  // increasing per client
  std::optional<NodeId> subject;
  Bytes operation;
  PublicKey client_pk;
  Signature client_sig;
};

Request make_request(const Identity& client, RequestKind kind, std::uint64_t id,
                     std::optional<NodeId> subject, Bytes operation = {});
Request noop_request();
bool request_authentic(const Request& r);
Digest digest_of(const Request& r);

/// Ledger operation carried by RequestKind::Operation.
enum class LedgerOp : std::uint8_t { Bind = 1, Update = 2 };
Bytes encode_ledger_op(LedgerOp op, const bedns::MappingRecord& record);
std::pair<LedgerOp, bedns::MappingRecord> decode_ledger_op(ByteView b);

/// What an absorbed node needs to join: group state at the absorbing seq.
struct Snapshot {
  std::uint64_t view = 0;
  NodeId primary;
  std::vector<NodeId> members;
  std::uint64_t last_executed = 0;
  std::vector<std::pair<BlockchainAddress, std::uint64_t>> client_marks;  // last executed id
  std::vector<bedns::Block> blocks;
};

enum class MsgKind : std::uint8_t {
  Heartbeat = 1,
  ReqAbs,
  ReqExp,
  ReqOp,
  PrePrepare,
  Prepare,
  Commit,
  Reply,
  ViewChange,
  NewView,
  Welcome,
};

const char* to_string(MsgKind k);

struct PreparedProof;

struct Message {
  MsgKind kind = MsgKind::Heartbeat;
  std::uint64_t view = 0;  // the target view for ViewChange and NewView
  std::uint64_t seq = 0;
  BlockchainAddress sender;
  PublicKey sender_pk;
  std::optional<Request> request;  // client requests and PrePrepare
  Digest digest;                   // Prepare, Commit, Reply
  bool ok = true;                  // Reply outcome
  /// Reply: the primary the sender follows. ViewChange: the excluded node.
  std::optional<NodeId> node;
  std::uint64_t last_executed = 0;     // ViewChange
  std::vector<PreparedProof> proofs;   // ViewChange
  std::vector<Message> view_changes;   // NewView
  std::vector<Message> preprepares;    // NewView
  std::optional<Snapshot> snapshot;    // Welcome
  Signature sig;
};

/// A PrePrepare together with the Prepare quorum that prepared it.
struct PreparedProof {
  Message preprepare;
  std::vector<Message> prepares;
};

void encode(ByteWriter& w, const Request& r);
void encode(ByteWriter& w, const Snapshot& s);
void encode(ByteWriter& w, const Message& m);
Bytes encode(const Message& m);
Message decode_message(ByteView b);
Digest digest_of(const Snapshot& s);

Bytes signing_bytes(const Message& m);
void sign_message(Message& m, const Identity& sender);
/// The key hashes to the sender address and the signature checks out.
bool message_authentic(const Message& m);

/// Message digest used in traces: the request digest where there is one.
Digest trace_digest(const Message& m);
std::string trace_line(std::uint64_t tick, const Message& m);

}  // namespace beacons::consensus
