#pragma once

// Name-service ledger: the three classes of multi-signed mapping records, the
// hash-chained block store, and Bind / Update / Verify / Search.

#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "beacons/expected.hpp"
#include "beacons/identity.hpp"

namespace beacons::bedns {

/// I: participant -> address. II: vehicle -> Type I unit. III: vehicle ->
/// Type I gateway -> Type IIA unit.
enum class RecordClass : std::uint8_t { I = 1, II = 2, III = 3 };

const char* to_string(RecordClass c);
std::optional<RecordClass> parse_record_class(std::string_view s);

/// A signature together with the key that produced it. Ed25519 does not
/// support key recovery, so the signer key travels with the signature and is
/// bound to the expected address by hashing.
struct Endorsement {
  PublicKey signer;
  Signature sig;
  auto operator<=>(const Endorsement&) const = default;
};

struct MappingRecord {
  RecordClass cls = RecordClass::I;
  BlockchainAddress bcadd_p;
  std::optional<NetworkAddress> add_p;
  std::optional<BlockchainAddress> bcadd_ui;
  std::optional<NetworkAddress> add_ui;
  std::optional<Label> label_ui;
  std::optional<BlockchainAddress> bcadd_uiia;
  std::optional<NetworkAddress> add_uiia;
  std::optional<Label> label_uiia;
  Timestamp timestamp;
  std::vector<Endorsement> signatures;

  auto operator<=>(const MappingRecord&) const = default;
};

/// Index key: one live record per (participant, class, label).
struct RecordKey {
  BlockchainAddress bcadd_p;
  RecordClass cls = RecordClass::I;
  std::string label;  // empty for Class I
  auto operator<=>(const RecordKey&) const = default;
};

RecordKey key_of(const MappingRecord& r);

/// The entity a record tells you how to reach, and its address.
BlockchainAddress subject_of(const MappingRecord& r);
std::optional<NetworkAddress> subject_address(const MappingRecord& r);

/// Signer addresses in the order their signatures must appear.
std::vector<BlockchainAddress> required_signers(const MappingRecord& r);

/// Canonical bytes of (M, T): what every endorsement signs.
Bytes signing_bytes(const MappingRecord& r);
void encode(ByteWriter& w, const MappingRecord& r);
Bytes encode(const MappingRecord& r);
MappingRecord decode_record(ByteReader& r);

/// Apply every endorsement in order, signing the record's current (M, T).
void endorse(MappingRecord& r, std::span<const Identity> signers);

MappingRecord make_class_one(const Identity& participant, NetworkAddress add, Timestamp t);
MappingRecord make_class_two(const Identity& vehicle, const Identity& unit, NetworkAddress add_ui,
                             Label label, Timestamp t);
MappingRecord make_class_three(const Identity& vehicle, const Identity& gateway,
                               NetworkAddress add_ui, Label label_ui, const Identity& unit,
                               NetworkAddress add_uiia, Label label_uiia, Timestamp t);

enum class LedgerError {
  AlreadyBound,
  NotBound,
  StaleTimestamp,
  BadSignature,
  MalformedRecord,
  NotFound,
};

const char* to_string(LedgerError e);

using Status = Expected<void, LedgerError>;

/// Shape and signature validation shared by bind and update.
Status validate(const MappingRecord& r);

struct Block {
  std::uint64_t height = 0;
  Digest prev_hash;
  std::vector<MappingRecord> records;
  Digest block_hash;

  auto operator<=>(const Block&) const = default;
};

Digest compute_block_hash(std::uint64_t height, const Digest& prev_hash,
                          std::span<const MappingRecord> records);

/// Height of the first block whose hash fails to recompute or link, if any.
std::optional<std::uint64_t> first_bad_block(std::span<const Block> blocks);
bool verify_chain(std::span<const Block> blocks);

/// Append-only chain plus the latest-wins index. Starts with an empty genesis
/// block at height 0; records become searchable once their block commits.
class Ledger {
 public:
  Ledger();

  /// Rebuilds the index from an existing chain without validating it.
  static Ledger from_blocks(std::vector<Block> blocks);

  Status bind(const MappingRecord& record);
  Status update(const MappingRecord& record);
  bool verify_mapping(const MappingRecord& claim) const;
  Expected<std::vector<MappingRecord>, LedgerError> search(
      const BlockchainAddress& bcadd_p, RecordClass cls,
      const std::optional<Label>& label = std::nullopt) const;

  /// Latest committed record whose subject is `bcadd`.
  std::optional<MappingRecord> resolve(const BlockchainAddress& bcadd) const;

  const Block& commit_block();

  bool verify_chain() const { return bedns::verify_chain(blocks_); }

  std::span<const Block> blocks() const { return blocks_; }
  std::span<const MappingRecord> staged() const { return staged_; }
  const Block& head() const { return blocks_.back(); }

  /// Every committed record, oldest first.
  std::vector<MappingRecord> all_records() const;

 private:
  struct Location {
    std::size_t block = 0;
    std::size_t index = 0;
  };

  const MappingRecord& at(const Location& loc) const {
    return blocks_[loc.block].records[loc.index];
  }
  std::optional<Timestamp> current_timestamp(const RecordKey& key) const;
  void index_block(std::size_t position);

  std::vector<Block> blocks_;
  std::vector<MappingRecord> staged_;
  std::map<RecordKey, Location> index_;
  std::map<BlockchainAddress, Location> subjects_;
};

nlohmann::json record_to_json(const MappingRecord& r);
MappingRecord record_from_json(const nlohmann::json& j);
nlohmann::json ledger_to_json(const Ledger& ledger);
nlohmann::json blocks_to_json(std::span<const Block> blocks);
/// Parses the exported block array. Does not check the hash chain.
std::vector<Block> blocks_from_json(const nlohmann::json& j);

}  // namespace beacons::bedns
