#include "beacons/identity.hpp"

#include <sodium.h>

#include <mutex>

namespace beacons {
namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  });
}

class Ed25519Scheme final : public SignatureScheme {
 public:
  Ed25519Scheme() { ensure_sodium(); }

  PublicKey public_key(const SecretKey& sk) const override {
    PublicKey pk;
    ByteArray<crypto_sign_SECRETKEYBYTES> expanded{};
    crypto_sign_seed_keypair(pk.bytes.data(), expanded.data(), sk.bytes.data());
    sodium_memzero(expanded.data(), expanded.size());
    return pk;
  }

  Signature sign(const SecretKey& sk, ByteView msg) const override {
    PublicKey pk;
    ByteArray<crypto_sign_SECRETKEYBYTES> expanded{};
    crypto_sign_seed_keypair(pk.bytes.data(), expanded.data(), sk.bytes.data());
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, msg.data(), msg.size(), expanded.data());
    sodium_memzero(expanded.data(), expanded.size());
    return sig;
  }

  bool verify(const PublicKey& pk, ByteView msg, const Signature& sig) const override {
    return crypto_sign_verify_detached(sig.bytes.data(), msg.data(), msg.size(), pk.bytes.data()) == 0;
  }
};

}  // namespace

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw DecodeError("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw DecodeError(std::string("invalid hex digit '") + c + "'");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

Label::Label(std::string text) : text_(std::move(text)) {
  if (text_.empty()) throw std::invalid_argument("label must be non-empty");
}

Digest sha256(ByteView data) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

std::unique_ptr<SignatureScheme> make_ed25519_scheme() { return std::make_unique<Ed25519Scheme>(); }

const SignatureScheme& default_scheme() {
  static const Ed25519Scheme scheme;
  return scheme;
}

PublicKey derive_public_key(const SecretKey& sk) { return default_scheme().public_key(sk); }

BlockchainAddress address_of(const PublicKey& pk) {
  auto d = sha256(pk.bytes);
  BlockchainAddress a;
  std::copy_n(d.bytes.begin(), a.bytes.size(), a.bytes.begin());
  return a;
}

BlockchainAddress derive_address(const SecretKey& sk) { return address_of(derive_public_key(sk)); }

Signature sign(const SecretKey& sk, ByteView msg) { return default_scheme().sign(sk, msg); }

bool verify(const PublicKey& pk, ByteView msg, const Signature& sig) {
  return default_scheme().verify(pk, msg, sig);
}

Identity Identity::from_secret(const SecretKey& sk) {
  Identity id;
  id.sk = sk;
  id.pk = derive_public_key(sk);
  id.bcadd = address_of(id.pk);
  return id;
}

Identity Identity::derived(std::uint64_t seed, std::string_view name) {
  ByteWriter w;
  w.str("beacons-fixture-key").u64(seed).str(name);
  SecretKey sk;
  sk.bytes = sha256(w.bytes()).bytes;
  return from_secret(sk);
}

void encode(ByteWriter& w, const BlockchainAddress& a) { w.field(a.bytes); }
void encode(ByteWriter& w, const PublicKey& pk) { w.field(pk.bytes); }
void encode(ByteWriter& w, const Signature& s) { w.field(s.bytes); }
void encode(ByteWriter& w, const Nonce& n) { w.field(n.bytes); }
void encode(ByteWriter& w, const Digest& d) { w.field(d.bytes); }
void encode(ByteWriter& w, const NetworkAddress& a) {
  w.u8(static_cast<std::uint8_t>(a.kind));
  w.str(a.value);
}
void encode(ByteWriter& w, const Label& l) { w.str(l.text()); }

BlockchainAddress decode_address(ByteReader& r) { return BlockchainAddress{r.fixed<20>()}; }

NetworkAddress decode_network_address(ByteReader& r) {
  auto kind = r.u8();
  if (kind != 1 && kind != 2) throw DecodeError("unknown address kind");
  NetworkAddress a;
  a.kind = static_cast<AddressKind>(kind);
  a.value = r.str();
  return a;
}

std::string to_string(const NetworkAddress& a) {
  return (a.kind == AddressKind::WirelessDirect ? "wireless:" : "internet:") + a.value;
}

}  // namespace beacons
