#pragma once

// Keys, blockchain addresses, network identifiers and the signature scheme
// shared by every other module.

#include <compare>
#include <cstdint>
#include <memory>
#include <string>

#include "beacons/bytes.hpp"

namespace beacons {

struct SecretKey {
  ByteArray<32> bytes{};
  auto operator<=>(const SecretKey&) const = default;
};

struct PublicKey {
  ByteArray<32> bytes{};
  auto operator<=>(const PublicKey&) const = default;
};

/// 20-byte truncated SHA-256 of a public key.
struct BlockchainAddress {
  ByteArray<20> bytes{};
  auto operator<=>(const BlockchainAddress&) const = default;
  std::string hex() const { return to_hex(bytes); }
  /// First four bytes in hex; used in traces and logs.
  std::string short_hex() const { return to_hex(ByteView(bytes).first(4)); }
};

struct Signature {
  ByteArray<64> bytes{};
  auto operator<=>(const Signature&) const = default;
};

struct Nonce {
  ByteArray<16> bytes{};
  auto operator<=>(const Nonce&) const = default;
};

struct Digest {
  ByteArray<32> bytes{};
  auto operator<=>(const Digest&) const = default;
  std::string hex() const { return to_hex(bytes); }
};

struct Timestamp {
  std::uint64_t ticks = 0;
  auto operator<=>(const Timestamp&) const = default;
};

enum class AddressKind : std::uint8_t { WirelessDirect = 1, Internet = 2 };

struct NetworkAddress {
  AddressKind kind = AddressKind::Internet;
  std::string value;
  auto operator<=>(const NetworkAddress&) const = default;
};

/// Names a unit's function ("obu", "front-camera"). Never empty.
class Label {
 public:
  Label() = default;
  explicit Label(std::string text);
  const std::string& text() const { return text_; }
  auto operator<=>(const Label&) const = default;

 private:
  std::string text_;
};

Digest sha256(ByteView data);

/// Signature scheme behind which any deterministic or asymmetric primitive
/// can sit. The shipped default is Ed25519, whose signatures are a pure
/// function of (key, message).
class SignatureScheme {
 public:
  virtual ~SignatureScheme() = default;
  virtual PublicKey public_key(const SecretKey& sk) const = 0;
  virtual Signature sign(const SecretKey& sk, ByteView msg) const = 0;
  virtual bool verify(const PublicKey& pk, ByteView msg, const Signature& sig) const = 0;
};

std::unique_ptr<SignatureScheme> make_ed25519_scheme();
const SignatureScheme& default_scheme();

PublicKey derive_public_key(const SecretKey& sk);
BlockchainAddress address_of(const PublicKey& pk);
BlockchainAddress derive_address(const SecretKey& sk);

Signature sign(const SecretKey& sk, ByteView msg);
bool verify(const PublicKey& pk, ByteView msg, const Signature& sig);

/// Key material for a named entity. The secret never leaves this struct in
/// any serialized form.
struct Identity {
  SecretKey sk;
  PublicKey pk;
  BlockchainAddress bcadd;

  static Identity from_secret(const SecretKey& sk);
  /// Deterministic key for scenario fixtures: SHA-256(tag || seed || name).
  static Identity derived(std::uint64_t seed, std::string_view name);

  Signature sign(ByteView msg) const { return beacons::sign(sk, msg); }
};

void encode(ByteWriter& w, const BlockchainAddress& a);
void encode(ByteWriter& w, const PublicKey& pk);
void encode(ByteWriter& w, const Signature& s);
void encode(ByteWriter& w, const Nonce& n);
void encode(ByteWriter& w, const Digest& d);
void encode(ByteWriter& w, const NetworkAddress& a);
void encode(ByteWriter& w, const Label& l);

BlockchainAddress decode_address(ByteReader& r);
NetworkAddress decode_network_address(ByteReader& r);

std::string to_string(const NetworkAddress& a);

}  // namespace beacons
