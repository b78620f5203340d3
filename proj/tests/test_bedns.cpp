#include <doctest.h>

#include <map>
#include <random>

#include "beacons/bedns.hpp"

using namespace beacons;
using namespace beacons::bedns;

namespace {

NetworkAddress inet(std::string v) { return {AddressKind::Internet, std::move(v)}; }
NetworkAddress wifi(std::string v) { return {AddressKind::WirelessDirect, std::move(v)}; }

struct Fixture {
  Identity rsu = Identity::derived(1, "rsu");
  Identity vehicle = Identity::derived(1, "vehicle");
  Identity obu = Identity::derived(1, "obu");
  Identity cell = Identity::derived(1, "cell");
  Identity camera = Identity::derived(1, "camera");
  Identity stranger = Identity::derived(1, "stranger");
};

// Brute-force latest-wins: scan every committed record, keep the max by
// (timestamp, height, position).
std::map<RecordKey, MappingRecord> brute_latest(const Ledger& l) {
  std::map<RecordKey, std::tuple<Timestamp, std::size_t, std::size_t>> best;
  std::map<RecordKey, MappingRecord> out;
  for (std::size_t h = 0; h < l.blocks().size(); ++h) {
    const auto& recs = l.blocks()[h].records;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      auto k = key_of(recs[i]);
      auto rank = std::make_tuple(recs[i].timestamp, h, i);
      if (!best.count(k) || best[k] < rank) {
        best[k] = rank;
        out[k] = recs[i];
      }
    }
  }
  return out;
}

// Visits every byte of every field in a record (the length-prefix-free part of
// its canonical encoding).
template <typename F>
void for_each_record_byte(MappingRecord& r, F&& f) {
  auto bytes = [&](auto& arr) {
    for (auto& b : arr) f(b);
  };
  auto text = [&](std::string& s) {
    for (auto& c : s) {
      auto b = static_cast<std::uint8_t>(c);
      f(b);
      c = static_cast<char>(b);
    }
  };
  auto cls = static_cast<std::uint8_t>(r.cls);
  f(cls);
  r.cls = static_cast<RecordClass>(cls);
  bytes(r.bcadd_p.bytes);
  if (r.add_p) text(r.add_p->value);
  if (r.bcadd_ui) bytes(r.bcadd_ui->bytes);
  if (r.add_ui) text(r.add_ui->value);
  if (r.bcadd_uiia) bytes(r.bcadd_uiia->bytes);
  if (r.add_uiia) text(r.add_uiia->value);
  for (int shift = 0; shift < 64; shift += 8) {
    auto b = static_cast<std::uint8_t>(r.timestamp.ticks >> shift);
    auto before = b;
    f(b);
    r.timestamp.ticks ^= static_cast<std::uint64_t>(before ^ b) << shift;
  }
  for (auto& e : r.signatures) {
    bytes(e.signer.bytes);
    bytes(e.sig.bytes);
  }
}

}  // namespace

TEST_CASE("bind accepts a correctly endorsed Class II record") {
  Fixture fx;
  Ledger l;
  auto rec = make_class_two(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), {10});
  CHECK(l.bind(rec));
  CHECK(l.staged().size() == 1);
  l.commit_block();
  auto found = l.search(fx.vehicle.bcadd, RecordClass::II, Label("obu"));
  REQUIRE(found);
  CHECK(found->front() == rec);
}

TEST_CASE("signature arity is exactly one, two, three by class") {
  Fixture fx;
  Ledger l;
  auto two = make_class_two(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), {10});
  auto short_two = two;
  short_two.signatures.pop_back();
  auto r = l.bind(short_two);
  REQUIRE_FALSE(r);
  CHECK(r.error() == LedgerError::MalformedRecord);

  auto one = make_class_one(fx.rsu, inet("10.0.0.1"), {1});
  one.signatures.push_back(one.signatures.front());
  CHECK(l.bind(one).error() == LedgerError::MalformedRecord);

  auto three = make_class_three(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), fx.camera,
                                wifi("cam-1"), Label("front-camera"), {5});
  CHECK(three.signatures.size() == 3);
  CHECK(l.bind(three));

  // A Class I record carrying Class II fields is malformed.
  auto mixed = make_class_one(fx.rsu, inet("10.0.0.1"), {1});
  mixed.label_ui = Label("x");
  CHECK(l.bind(mixed).error() == LedgerError::MalformedRecord);
}

TEST_CASE("duplicate bind is rejected, committed or staged") {
  Fixture fx;
  Ledger l;
  auto rec = make_class_one(fx.rsu, inet("10.0.0.1"), {1});
  REQUIRE(l.bind(rec));
  CHECK(l.bind(rec).error() == LedgerError::AlreadyBound);
  l.commit_block();
  CHECK(l.bind(make_class_one(fx.rsu, inet("10.0.0.2"), {2})).error() ==
        LedgerError::AlreadyBound);
}

TEST_CASE("update is monotone in timestamp") {
  Fixture fx;
  Ledger l;
  REQUIRE(l.bind(make_class_one(fx.rsu, inet("10.0.0.1"), {5})));
  l.commit_block();

  CHECK(l.update(make_class_one(fx.rsu, inet("10.0.0.1"), {5})).error() ==
        LedgerError::StaleTimestamp);
  CHECK(l.update(make_class_one(fx.rsu, inet("10.0.0.1"), {4})).error() ==
        LedgerError::StaleTimestamp);
  CHECK(l.update(make_class_one(fx.stranger, inet("x"), {9})).error() == LedgerError::NotBound);

  REQUIRE(l.update(make_class_one(fx.rsu, inet("10.0.0.9"), {6})));
  l.commit_block();
  auto found = l.search(fx.rsu.bcadd, RecordClass::I);
  REQUIRE(found);
  CHECK(found->front().add_p->value == "10.0.0.9");
  CHECK(l.resolve(fx.rsu.bcadd)->add_p->value == "10.0.0.9");
}

TEST_CASE("key swap at every signer position yields BadSignature") {
  Fixture fx;
  Ledger l;
  auto base = make_class_three(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), fx.camera,
                               wifi("cam-1"), Label("front-camera"), {5});
  REQUIRE(l.bind(base));
  l.commit_block();

  auto update = base;
  update.timestamp = {6};
  const std::vector<Identity> honest{fx.vehicle, fx.obu, fx.camera};
  for (std::size_t pos = 0; pos < honest.size(); ++pos) {
    auto signers = honest;
    signers[pos] = fx.stranger;
    auto forged = update;
    endorse(forged, signers);
    auto r = l.update(forged);
    REQUIRE_FALSE(r);
    CHECK(r.error() == LedgerError::BadSignature);

    // Swapping in the stranger's key while keeping the honest signature bytes.
    auto spliced = update;
    endorse(spliced, honest);
    spliced.signatures[pos].signer = fx.stranger.pk;
    CHECK(l.update(spliced).error() == LedgerError::BadSignature);
  }
  endorse(update, honest);
  CHECK(l.update(update));
}

TEST_CASE("verify_mapping matches only the currently indexed record") {
  Fixture fx;
  Ledger l;
  auto rec = make_class_one(fx.rsu, inet("10.0.0.1"), {1});
  REQUIRE(l.bind(rec));
  CHECK_FALSE(l.verify_mapping(rec));  // staged, not yet committed
  l.commit_block();
  CHECK(l.verify_mapping(rec));

  auto stale = rec;
  stale.add_p->value = "10.0.0.2";
  CHECK_FALSE(l.verify_mapping(stale));
  CHECK_FALSE(l.verify_mapping(make_class_one(fx.stranger, inet("x"), {1})));

  REQUIRE(l.update(make_class_one(fx.rsu, inet("10.0.0.3"), {2})));
  l.commit_block();
  CHECK_FALSE(l.verify_mapping(rec));
}

TEST_CASE("search returns every labelled unit when the label is omitted") {
  Fixture fx;
  Ledger l;
  REQUIRE(l.bind(make_class_two(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), {1})));
  REQUIRE(l.bind(make_class_two(fx.vehicle, fx.cell, inet("5g-1"), Label("cellular"), {1})));
  l.commit_block();

  auto all = l.search(fx.vehicle.bcadd, RecordClass::II);
  REQUIRE(all);
  CHECK(all->size() == 2);

  auto one = l.search(fx.vehicle.bcadd, RecordClass::II, Label("cellular"));
  REQUIRE(one);
  CHECK(one->size() == 1);
  CHECK(*one->front().bcadd_ui == fx.cell.bcadd);

  CHECK(l.search(fx.stranger.bcadd, RecordClass::II).error() == LedgerError::NotFound);
  CHECK(l.search(fx.vehicle.bcadd, RecordClass::III).error() == LedgerError::NotFound);
}

TEST_CASE("commit_block extends the hash chain") {
  Fixture fx;
  Ledger l;
  CHECK(l.blocks().size() == 1);
  CHECK(l.head().prev_hash == Digest{});

  const auto& empty = l.commit_block();
  CHECK(empty.height == 1);
  CHECK(empty.records.empty());
  CHECK(l.verify_chain());

  REQUIRE(l.bind(make_class_one(fx.rsu, inet("a"), {1})));
  REQUIRE(l.bind(make_class_two(fx.vehicle, fx.obu, wifi("b"), Label("obu"), {1})));
  REQUIRE(l.bind(make_class_two(fx.vehicle, fx.cell, wifi("c"), Label("cell"), {1})));
  const auto& b2 = l.commit_block();
  CHECK(b2.height == 2);
  CHECK(b2.prev_hash == l.blocks()[1].block_hash);
  CHECK(b2.records.size() == 3);

  // Recompute the digest independently after mutating one record byte.
  auto records = b2.records;
  auto original = compute_block_hash(2, b2.prev_hash, records);
  CHECK(original == b2.block_hash);
  records[1].signatures[0].sig.bytes[0] ^= 1;
  CHECK(compute_block_hash(2, b2.prev_hash, records) != original);
}

TEST_CASE("verify_chain detects edits and accepts truncated prefixes") {
  Fixture fx;
  Ledger l;
  REQUIRE(l.bind(make_class_one(fx.rsu, inet("a"), {1})));
  l.commit_block();
  REQUIRE(l.bind(make_class_two(fx.vehicle, fx.obu, wifi("b"), Label("obu"), {1})));
  l.commit_block();
  CHECK(l.verify_chain());

  std::vector<Block> edited(l.blocks().begin(), l.blocks().end());
  edited[1].records[0].add_p->value[0] ^= 1;
  CHECK_FALSE(verify_chain(edited));
  CHECK(first_bad_block(edited) == 1u);

  std::vector<Block> truncated(l.blocks().begin(), l.blocks().end() - 1);
  CHECK(verify_chain(truncated));

  std::vector<Block> relinked(l.blocks().begin(), l.blocks().end());
  relinked[2].prev_hash.bytes[3] ^= 0x10;
  CHECK(first_bad_block(relinked) == 2u);
}

TEST_CASE("JSON export round-trips and preserves the chain") {
  Fixture fx;
  Ledger l;
  REQUIRE(l.bind(make_class_one(fx.rsu, inet("10.0.0.1"), {1})));
  REQUIRE(l.bind(make_class_three(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), fx.camera,
                                  wifi("cam-1"), Label("cam"), {2})));
  l.commit_block();
  auto j = ledger_to_json(l);
  auto text = j.dump();
  CHECK(text.find("\"bcadd_p\":\"" + fx.rsu.bcadd.hex() + "\"") != std::string::npos);

  auto blocks = blocks_from_json(nlohmann::json::parse(text));
  CHECK(verify_chain(blocks));
  auto restored = Ledger::from_blocks(blocks);
  CHECK(restored.verify_mapping(*l.resolve(fx.camera.bcadd)));
  CHECK(ledger_to_json(restored).dump() == text);
}

TEST_CASE("canonical record encoding decodes to the same record") {
  Fixture fx;
  auto rec = make_class_three(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), fx.camera,
                              wifi("cam-1"), Label("cam"), {2});
  auto bytes = encode(rec);
  ByteReader r(bytes);
  CHECK(decode_record(r) == rec);
  CHECK(r.done());
}

TEST_CASE("property: latest-wins search equals a brute-force scan") {
  std::mt19937_64 gen(2024);
  std::vector<Identity> parts;
  for (int i = 0; i < 4; ++i) parts.push_back(Identity::derived(9, "p" + std::to_string(i)));
  std::vector<Identity> units;
  for (int i = 0; i < 3; ++i) units.push_back(Identity::derived(9, "u" + std::to_string(i)));

  for (int round = 0; round < 20; ++round) {
    Ledger l;
    std::map<RecordKey, std::uint64_t> clock;
    int blocks = 1 + static_cast<int>(gen() % 12);
    for (int b = 0; b < blocks; ++b) {
      int n = static_cast<int>(gen() % 4);
      for (int k = 0; k < n; ++k) {
        const auto& p = parts[gen() % parts.size()];
        MappingRecord rec;
        if (gen() % 2) {
          rec = make_class_one(p, inet("a" + std::to_string(gen() % 100)), {0});
        } else {
          auto ui = gen() % units.size();
          rec = make_class_two(p, units[ui], wifi("w" + std::to_string(gen() % 100)),
                               Label("l" + std::to_string(ui)), {0});
        }
        auto key = key_of(rec);
        rec.timestamp.ticks = ++clock[key];
        std::vector<Identity> signers{p};
        if (rec.cls == RecordClass::II) {
          for (const auto& u : units)
            if (u.bcadd == *rec.bcadd_ui) signers.push_back(u);
        }
        endorse(rec, signers);
        auto status = clock[key] == 1 ? l.bind(rec) : l.update(rec);
        REQUIRE(status);
      }
      l.commit_block();
    }
    auto expected = brute_latest(l);
    for (const auto& [key, rec] : expected) {
      auto found = l.search(key.bcadd_p, key.cls,
                            key.label.empty() ? std::nullopt : std::optional<Label>(Label(key.label)));
      REQUIRE(found);
      CHECK(found->size() == 1);
      CHECK(found->front() == rec);
      CHECK(l.verify_mapping(rec));
    }
  }
}

TEST_CASE("property: a single-byte mutation of any committed record breaks the chain") {
  Fixture fx;
  Ledger l;
  REQUIRE(l.bind(make_class_one(fx.rsu, inet("10.0.0.1"), {1})));
  REQUIRE(l.bind(make_class_three(fx.vehicle, fx.obu, wifi("obu-1"), Label("obu"), fx.camera,
                                  wifi("cam-1"), Label("cam"), {2})));
  l.commit_block();
  l.commit_block();

  std::size_t mutations = 0;
  const std::vector<Block> pristine(l.blocks().begin(), l.blocks().end());
  for (std::size_t ri = 0; ri < pristine[1].records.size(); ++ri) {
    std::size_t count = 0;
    auto probe = pristine[1].records[ri];
    for_each_record_byte(probe, [&](std::uint8_t&) { ++count; });
    for (std::size_t target = 0; target < count; ++target) {
      auto blocks = pristine;
      std::size_t pos = 0;
      for_each_record_byte(blocks[1].records[ri], [&](std::uint8_t& b) {
        if (pos++ == target) b ^= 0x01;
      });
      REQUIRE(blocks[1].records[ri] != pristine[1].records[ri]);
      CHECK_FALSE(verify_chain(blocks));
      ++mutations;
    }
  }
  CHECK(mutations > 300);
}
