#include "beacons/bedns.hpp"

#include <algorithm>

namespace beacons::bedns {
namespace {

void encode_optional(ByteWriter& w, const std::optional<BlockchainAddress>& v) {
  w.u8(v.has_value());
  if (v) encode(w, *v);
}
void encode_optional(ByteWriter& w, const std::optional<NetworkAddress>& v) {
  w.u8(v.has_value());
  if (v) encode(w, *v);
}
void encode_optional(ByteWriter& w, const std::optional<Label>& v) {
  w.u8(v.has_value());
  if (v) encode(w, *v);
}

void encode_body(ByteWriter& w, const MappingRecord& r) {
  w.u8(static_cast<std::uint8_t>(r.cls));
  encode(w, r.bcadd_p);
  encode_optional(w, r.add_p);
  encode_optional(w, r.bcadd_ui);
  encode_optional(w, r.add_ui);
  encode_optional(w, r.label_ui);
  encode_optional(w, r.bcadd_uiia);
  encode_optional(w, r.add_uiia);
  encode_optional(w, r.label_uiia);
  w.u64(r.timestamp.ticks);
}

template <typename T, typename F>
std::optional<T> decode_optional(ByteReader& r, F&& decode_value) {
  auto present = r.u8();
  if (present > 1) throw DecodeError("bad presence flag");
  if (!present) return std::nullopt;
  return decode_value(r);
}

std::size_t expected_arity(RecordClass c) {
  switch (c) {
    case RecordClass::I: return 1;
    case RecordClass::II: return 2;
    case RecordClass::III: return 3;
  }
  return 0;
}

bool shape_ok(const MappingRecord& r) {
  const bool one = r.cls == RecordClass::I;
  const bool three = r.cls == RecordClass::III;
  if (r.add_p.has_value() != one) return false;
  if (r.bcadd_ui.has_value() == one || r.add_ui.has_value() == one || r.label_ui.has_value() == one)
    return false;
  if (r.bcadd_uiia.has_value() != three || r.add_uiia.has_value() != three ||
      r.label_uiia.has_value() != three)
    return false;
  return r.signatures.size() == expected_arity(r.cls);
}

}  // namespace

const char* to_string(RecordClass c) {
  switch (c) {
    case RecordClass::I: return "I";
    case RecordClass::II: return "II";
    case RecordClass::III: return "III";
  }
  return "?";
}

std::optional<RecordClass> parse_record_class(std::string_view s) {
  if (s == "I" || s == "1") return RecordClass::I;
  if (s == "II" || s == "2") return RecordClass::II;
  if (s == "III" || s == "3") return RecordClass::III;
  return std::nullopt;
}

const char* to_string(LedgerError e) {
  switch (e) {
    case LedgerError::AlreadyBound: return "AlreadyBound";
    case LedgerError::NotBound: return "NotBound";
    case LedgerError::StaleTimestamp: return "StaleTimestamp";
    case LedgerError::BadSignature: return "BadSignature";
    case LedgerError::MalformedRecord: return "MalformedRecord";
    case LedgerError::NotFound: return "NotFound";
  }
  return "?";
}

RecordKey key_of(const MappingRecord& r) {
  RecordKey k{r.bcadd_p, r.cls, {}};
  if (r.cls == RecordClass::II && r.label_ui) k.label = r.label_ui->text();
  if (r.cls == RecordClass::III && r.label_uiia) k.label = r.label_uiia->text();
  return k;
}

BlockchainAddress subject_of(const MappingRecord& r) {
  switch (r.cls) {
    case RecordClass::I: return r.bcadd_p;
    case RecordClass::II: return r.bcadd_ui.value_or(r.bcadd_p);
    case RecordClass::III: return r.bcadd_uiia.value_or(r.bcadd_p);
  }
  return r.bcadd_p;
}

std::optional<NetworkAddress> subject_address(const MappingRecord& r) {
  switch (r.cls) {
    case RecordClass::I: return r.add_p;
    case RecordClass::II: return r.add_ui;
    case RecordClass::III: return r.add_uiia;
  }
  return std::nullopt;
}

std::vector<BlockchainAddress> required_signers(const MappingRecord& r) {
  std::vector<BlockchainAddress> out{r.bcadd_p};
  if (r.cls != RecordClass::I && r.bcadd_ui) out.push_back(*r.bcadd_ui);
  if (r.cls == RecordClass::III && r.bcadd_uiia) out.push_back(*r.bcadd_uiia);
  return out;
}

Bytes signing_bytes(const MappingRecord& r) {
  ByteWriter w;
  w.str("beacons/mapping");
  encode_body(w, r);
  return std::move(w).take();
}

void encode(ByteWriter& w, const MappingRecord& r) {
  encode_body(w, r);
  w.u32(static_cast<std::uint32_t>(r.signatures.size()));
  for (const auto& e : r.signatures) {
    encode(w, e.signer);
    encode(w, e.sig);
  }
}

Bytes encode(const MappingRecord& r) {
  ByteWriter w;
  encode(w, r);
  return std::move(w).take();
}

MappingRecord decode_record(ByteReader& in) {
  MappingRecord r;
  auto cls = in.u8();
  if (cls < 1 || cls > 3) throw DecodeError("unknown record class");
  r.cls = static_cast<RecordClass>(cls);
  r.bcadd_p = decode_address(in);
  auto addr = [](ByteReader& x) { return decode_network_address(x); };
  auto bcadd = [](ByteReader& x) { return decode_address(x); };
  auto label = [](ByteReader& x) { return Label(x.str()); };
  r.add_p = decode_optional<NetworkAddress>(in, addr);
  r.bcadd_ui = decode_optional<BlockchainAddress>(in, bcadd);
  r.add_ui = decode_optional<NetworkAddress>(in, addr);
  r.label_ui = decode_optional<Label>(in, label);
  r.bcadd_uiia = decode_optional<BlockchainAddress>(in, bcadd);
  r.add_uiia = decode_optional<NetworkAddress>(in, addr);
  r.label_uiia = decode_optional<Label>(in, label);
  r.timestamp.ticks = in.u64();
  auto n = in.u32();
  if (n > 16) throw DecodeError("too many signatures");
  for (std::uint32_t i = 0; i < n; ++i) {
    Endorsement e;
    e.signer = PublicKey{in.fixed<32>()};
    e.sig = Signature{in.fixed<64>()};
    r.signatures.push_back(e);
  }
  return r;
}

void endorse(MappingRecord& r, std::span<const Identity> signers) {
  r.signatures.clear();
  const auto msg = signing_bytes(r);
  for (const auto& id : signers) r.signatures.push_back({id.pk, id.sign(msg)});
}

MappingRecord make_class_one(const Identity& participant, NetworkAddress add, Timestamp t) {
  MappingRecord r;
  r.cls = RecordClass::I;
  r.bcadd_p = participant.bcadd;
  r.add_p = std::move(add);
  r.timestamp = t;
  const Identity signers[] = {participant};
  endorse(r, signers);
  return r;
}

MappingRecord make_class_two(const Identity& vehicle, const Identity& unit, NetworkAddress add_ui,
                             Label label, Timestamp t) {
  MappingRecord r;
  r.cls = RecordClass::II;
  r.bcadd_p = vehicle.bcadd;
  r.bcadd_ui = unit.bcadd;
  r.add_ui = std::move(add_ui);
  r.label_ui = std::move(label);
  r.timestamp = t;
  const Identity signers[] = {vehicle, unit};
  endorse(r, signers);
  return r;
}

MappingRecord make_class_three(const Identity& vehicle, const Identity& gateway,
                               NetworkAddress add_ui, Label label_ui, const Identity& unit,
                               NetworkAddress add_uiia, Label label_uiia, Timestamp t) {
  MappingRecord r;
  r.cls = RecordClass::III;
  r.bcadd_p = vehicle.bcadd;
  r.bcadd_ui = gateway.bcadd;
  r.add_ui = std::move(add_ui);
  r.label_ui = std::move(label_ui);
  r.bcadd_uiia = unit.bcadd;
  r.add_uiia = std::move(add_uiia);
  r.label_uiia = std::move(label_uiia);
  r.timestamp = t;
  const Identity signers[] = {vehicle, gateway, unit};
  endorse(r, signers);
  return r;
}

Status validate(const MappingRecord& r) {
  if (!shape_ok(r)) return unexpected(LedgerError::MalformedRecord);
  const auto signers = required_signers(r);
  const auto msg = signing_bytes(r);
  for (std::size_t i = 0; i < signers.size(); ++i) {
    const auto& e = r.signatures[i];
    if (address_of(e.signer) != signers[i] || !verify(e.signer, msg, e.sig)) {
      return unexpected(LedgerError::BadSignature);
    }
  }
  return {};
}

Digest compute_block_hash(std::uint64_t height, const Digest& prev_hash,
                          std::span<const MappingRecord> records) {
  ByteWriter w;
  w.str("beacons/block").u64(height);
  encode(w, prev_hash);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) encode(w, r);
  return sha256(w.bytes());
}

std::optional<std::uint64_t> first_bad_block(std::span<const Block> blocks) {
  Digest prev{};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.height != i || b.prev_hash != prev ||
        compute_block_hash(b.height, b.prev_hash, b.records) != b.block_hash) {
      return i;
    }
    prev = b.block_hash;
  }
  return std::nullopt;
}

bool verify_chain(std::span<const Block> blocks) { return !first_bad_block(blocks).has_value(); }

Ledger::Ledger() {
  Block genesis;
  genesis.block_hash = compute_block_hash(0, genesis.prev_hash, {});
  blocks_.push_back(std::move(genesis));
}

Ledger Ledger::from_blocks(std::vector<Block> blocks) {
  Ledger l;
  if (blocks.empty()) return l;
  l.blocks_ = std::move(blocks);
  for (std::size_t i = 0; i < l.blocks_.size(); ++i) l.index_block(i);
  return l;
}

void Ledger::index_block(std::size_t position) {
  const auto& b = blocks_[position];
  // Latest wins on (timestamp, height, position); committed order already
  // orders the last two, so only strictly older timestamps lose.
  for (std::size_t i = 0; i < b.records.size(); ++i) {
    const auto& r = b.records[i];
    Location loc{position, i};
    auto place = [&](auto& map, const auto& key) {
      auto it = map.find(key);
      if (it == map.end() || at(it->second).timestamp <= r.timestamp) map[key] = loc;
    };
    place(index_, key_of(r));
    place(subjects_, subject_of(r));
  }
}

std::optional<Timestamp> Ledger::current_timestamp(const RecordKey& key) const {
  std::optional<Timestamp> ts;
  if (auto it = index_.find(key); it != index_.end()) ts = at(it->second).timestamp;
  for (const auto& s : staged_) {
    if (key_of(s) == key && (!ts || *ts <= s.timestamp)) ts = s.timestamp;
  }
  return ts;
}

Status Ledger::bind(const MappingRecord& record) {
  if (auto v = validate(record); !v) return v;
  if (current_timestamp(key_of(record))) return unexpected(LedgerError::AlreadyBound);
  staged_.push_back(record);
  return {};
}

Status Ledger::update(const MappingRecord& record) {
  if (auto v = validate(record); !v) return v;
  auto ts = current_timestamp(key_of(record));
  if (!ts) return unexpected(LedgerError::NotBound);
  if (record.timestamp <= *ts) return unexpected(LedgerError::StaleTimestamp);
  staged_.push_back(record);
  return {};
}

bool Ledger::verify_mapping(const MappingRecord& claim) const {
  auto it = index_.find(key_of(claim));
  return it != index_.end() && encode(at(it->second)) == encode(claim);
}

Expected<std::vector<MappingRecord>, LedgerError> Ledger::search(
    const BlockchainAddress& bcadd_p, RecordClass cls, const std::optional<Label>& label) const {
  std::vector<MappingRecord> out;
  if (label) {
    if (auto it = index_.find(RecordKey{bcadd_p, cls, label->text()}); it != index_.end()) {
      out.push_back(at(it->second));
    }
  } else {
    for (auto it = index_.lower_bound(RecordKey{bcadd_p, cls, {}});
         it != index_.end() && it->first.bcadd_p == bcadd_p && it->first.cls == cls; ++it) {
      out.push_back(at(it->second));
    }
  }
  if (out.empty()) return unexpected(LedgerError::NotFound);
  return out;
}

std::optional<MappingRecord> Ledger::resolve(const BlockchainAddress& bcadd) const {
  auto it = subjects_.find(bcadd);
  if (it == subjects_.end()) return std::nullopt;
  return at(it->second);
}

const Block& Ledger::commit_block() {
  Block b;
  b.height = blocks_.size();
  b.prev_hash = blocks_.back().block_hash;
  b.records = std::move(staged_);
  staged_.clear();
  b.block_hash = compute_block_hash(b.height, b.prev_hash, b.records);
  blocks_.push_back(std::move(b));
  index_block(blocks_.size() - 1);
  return blocks_.back();
}

std::vector<MappingRecord> Ledger::all_records() const {
  std::vector<MappingRecord> out;
  for (const auto& b : blocks_) out.insert(out.end(), b.records.begin(), b.records.end());
  return out;
}

// JSON export: lowercase hex for every byte field.

namespace {

nlohmann::json address_json(const NetworkAddress& a) {
  return {{"kind", a.kind == AddressKind::WirelessDirect ? "wireless" : "internet"},
          {"value", a.value}};
}

NetworkAddress address_from(const nlohmann::json& j) {
  NetworkAddress a;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "wireless") {
    a.kind = AddressKind::WirelessDirect;
  } else if (kind == "internet") {
    a.kind = AddressKind::Internet;
  } else {
    throw DecodeError("unknown address kind '" + kind + "'");
  }
  a.value = j.at("value").get<std::string>();
  return a;
}

}  // namespace

nlohmann::json record_to_json(const MappingRecord& r) {
  nlohmann::json j;
  j["class"] = to_string(r.cls);
  j["bcadd_p"] = r.bcadd_p.hex();
  if (r.add_p) j["add_p"] = address_json(*r.add_p);
  if (r.bcadd_ui) j["bcadd_ui"] = r.bcadd_ui->hex();
  if (r.add_ui) j["add_ui"] = address_json(*r.add_ui);
  if (r.label_ui) j["label_ui"] = r.label_ui->text();
  if (r.bcadd_uiia) j["bcadd_uiia"] = r.bcadd_uiia->hex();
  if (r.add_uiia) j["add_uiia"] = address_json(*r.add_uiia);
  if (r.label_uiia) j["label_uiia"] = r.label_uiia->text();
  j["timestamp"] = r.timestamp.ticks;
  auto sigs = nlohmann::json::array();
  for (const auto& e : r.signatures) {
    sigs.push_back({{"signer", to_hex(e.signer.bytes)}, {"sig", to_hex(e.sig.bytes)}});
  }
  j["signatures"] = std::move(sigs);
  return j;
}

MappingRecord record_from_json(const nlohmann::json& j) {
  MappingRecord r;
  auto cls = parse_record_class(j.at("class").get<std::string>());
  if (!cls) throw DecodeError("unknown record class");
  r.cls = *cls;
  auto bcadd = [](const nlohmann::json& v) {
    return BlockchainAddress{array_from_hex<20>(v.get<std::string>())};
  };
  r.bcadd_p = bcadd(j.at("bcadd_p"));
  if (j.contains("add_p")) r.add_p = address_from(j["add_p"]);
  if (j.contains("bcadd_ui")) r.bcadd_ui = bcadd(j["bcadd_ui"]);
  if (j.contains("add_ui")) r.add_ui = address_from(j["add_ui"]);
  if (j.contains("label_ui")) r.label_ui = Label(j["label_ui"].get<std::string>());
  if (j.contains("bcadd_uiia")) r.bcadd_uiia = bcadd(j["bcadd_uiia"]);
  if (j.contains("add_uiia")) r.add_uiia = address_from(j["add_uiia"]);
  if (j.contains("label_uiia")) r.label_uiia = Label(j["label_uiia"].get<std::string>());
  r.timestamp.ticks = j.at("timestamp").get<std::uint64_t>();
  for (const auto& s : j.at("signatures")) {
    r.signatures.push_back({PublicKey{array_from_hex<32>(s.at("signer").get<std::string>())},
                            Signature{array_from_hex<64>(s.at("sig").get<std::string>())}});
  }
  return r;
}

nlohmann::json blocks_to_json(std::span<const Block> blocks) {
  auto out = nlohmann::json::array();
  for (const auto& b : blocks) {
    auto records = nlohmann::json::array();
    for (const auto& r : b.records) records.push_back(record_to_json(r));
    out.push_back({{"height", b.height},
                   {"prev_hash", b.prev_hash.hex()},
                   {"records", std::move(records)},
                   {"block_hash", b.block_hash.hex()}});
  }
  return out;
}

nlohmann::json ledger_to_json(const Ledger& ledger) { return blocks_to_json(ledger.blocks()); }

std::vector<Block> blocks_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DecodeError("ledger export must be a JSON array of blocks");
  std::vector<Block> blocks;
  for (const auto& jb : j) {
    Block b;
    b.height = jb.at("height").get<std::uint64_t>();
    b.prev_hash = Digest{array_from_hex<32>(jb.at("prev_hash").get<std::string>())};
    b.block_hash = Digest{array_from_hex<32>(jb.at("block_hash").get<std::string>())};
    for (const auto& jr : jb.at("records")) b.records.push_back(record_from_json(jr));
    blocks.push_back(std::move(b));
  }
  return blocks;
}

}  // namespace beacons::bedns
