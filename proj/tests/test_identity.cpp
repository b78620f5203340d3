#include <doctest.h>

#include <random>
#include <set>

#include "beacons/identity.hpp"

using namespace beacons;

namespace {

SecretKey random_key(std::mt19937_64& gen) {
  SecretKey sk;
  for (auto& b : sk.bytes) b = static_cast<std::uint8_t>(gen());
  return sk;
}

}  // namespace

TEST_CASE("derive_address of the all-zero key is a fixed golden value") {
  // Golden values produced with an independent Ed25519 + SHA-256 implementation.
  SecretKey zero;
  CHECK(to_hex(derive_public_key(zero).bytes) ==
        "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29");
  CHECK(derive_address(zero).hex() == "139e3940e64b5491722088d9a0d741628fc826e0");
  CHECK(to_hex(sign(zero, as_bytes("m")).bytes) ==
        "a7d2b316acb308e44ba5be4fa0cf2b7ab249c6d1748430d5350cffc1d34b8324"
        "794eedf65b07ca805d5d9bdb8adf9304ff07b4303111f17a8278743773af1c0f");
}

TEST_CASE("derive_address is deterministic and collision-free at test scale") {
  std::mt19937_64 gen(42);
  auto sk = random_key(gen);
  CHECK(derive_address(sk) == derive_address(sk));

  std::set<BlockchainAddress> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(derive_address(random_key(gen)));
  CHECK(seen.size() == 1000);
}

TEST_CASE("sign/verify round trip and wrong key") {
  std::mt19937_64 gen(7);
  auto sk = random_key(gen);
  auto other = random_key(gen);
  auto sig = sign(sk, as_bytes("m"));
  CHECK(verify(derive_public_key(sk), as_bytes("m"), sig));
  CHECK_FALSE(verify(derive_public_key(other), as_bytes("m"), sig));
}

TEST_CASE("every single-bit flip of the message invalidates the signature") {
  std::mt19937_64 gen(11);
  auto sk = random_key(gen);
  auto pk = derive_public_key(sk);
  Bytes msg{'b', 'e', 'a', 'c', 'o', 'n'};
  auto sig = sign(sk, msg);
  for (std::size_t byte = 0; byte < msg.size(); ++byte) {
    for (int bit = 0; bit < 8; ++bit) {
      auto flipped = msg;
      flipped[byte] ^= static_cast<std::uint8_t>(1u << bit);
      CHECK_FALSE(verify(pk, flipped, sig));
    }
  }
}

TEST_CASE("signature and key-swap fuzzing") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto sk = random_key(gen);
    auto pk = derive_public_key(sk);
    Bytes msg(1 + gen() % 40);
    for (auto& b : msg) b = static_cast<std::uint8_t>(gen());
    auto sig = sign(sk, msg);
    REQUIRE(verify(pk, msg, sig));

    auto bad = sig;
    bad.bytes[gen() % bad.bytes.size()] ^= static_cast<std::uint8_t>(1 + gen() % 255);
    CHECK_FALSE(verify(pk, msg, bad));
    CHECK_FALSE(verify(derive_public_key(random_key(gen)), msg, sig));
  }
}

TEST_CASE("derived fixture identities are stable and distinct by name") {
  auto a = Identity::derived(1, "rsu0");
  auto b = Identity::derived(1, "rsu0");
  auto c = Identity::derived(1, "rsu1");
  auto d = Identity::derived(2, "rsu0");
  CHECK(a.bcadd == b.bcadd);
  CHECK(a.bcadd != c.bcadd);
  CHECK(a.bcadd != d.bcadd);
  CHECK(a.bcadd == address_of(a.pk));
}

TEST_CASE("canonical encoding is big-endian and length-prefixed") {
  ByteWriter w;
  w.u32(0x01020304).u64(5).str("ab");
  const Bytes expected{1, 2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 5, 0, 0, 0, 2, 'a', 'b'};
  CHECK(w.bytes() == expected);

  ByteReader r(w.bytes());
  CHECK(r.u32() == 0x01020304);
  CHECK(r.u64() == 5);
  CHECK(r.str() == "ab");
  CHECK(r.done());

  ByteReader truncated(ByteView(expected).first(10));
  truncated.u32();
  CHECK_THROWS_AS(truncated.u64(), DecodeError);
}

TEST_CASE("labels are non-empty") {
  CHECK_THROWS_AS(Label(""), std::invalid_argument);
  CHECK(Label("obu").text() == "obu");
}

TEST_CASE("hex helpers") {
  CHECK(to_hex(Bytes{0x00, 0xab, 0xff}) == "00abff");
  CHECK(from_hex("00ABff") == Bytes{0x00, 0xab, 0xff});
  CHECK_THROWS_AS(from_hex("abc"), DecodeError);
  CHECK_THROWS_AS(from_hex("zz"), DecodeError);
}
